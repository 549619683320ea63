#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mnnh2/network.hpp"
#include "mnnh2/pde.hpp"
#include "mnnh2/train.hpp"

namespace mnnh2 {

// ---------------------------------------------------------------------------
// Run configuration: flat key=value UTF-8 text, '#' comments. Unknown keys
// are rejected; every key has a default (see default_run_config()).
// ---------------------------------------------------------------------------
struct RunConfig {
  ProblemSpec problem;
  NetworkConfig network;
  TrainConfig training;
  NadamConfig optimizer;
  int threads = 1;
  std::string metrics_path = "metrics.csv";

  /// Cross-field checks (N = 2^L m, dtype sane, ...).
  void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
/// Annotated text with every key at its default value.
std::string default_run_config();

// ---------------------------------------------------------------------------
// Dataset file: magic "MNH2DS1\0"; little-endian u32 version=1, d, N per
// axis (d values), count; u8 dtype (4|8); payload per sample v then u,
// column-major, contiguous.
// ---------------------------------------------------------------------------
void write_dataset(const std::string& path, const Dataset& ds, int dtype_bytes = 8);
Dataset read_dataset(const std::string& path, int* dtype_bytes = nullptr);

// ---------------------------------------------------------------------------
// Checkpoint file: magic "MNH2CK1\0"; serialized network config; per-layer
// weight and bias blobs in construction order, each prefixed by a u64 byte
// length. An optional trailing "MNH2OP1\0" section carries optimizer state
// (step counter, momentum-schedule product, moments) plus the finished epoch
// so interrupted training resumes exactly.
// ---------------------------------------------------------------------------
struct CheckpointExtra {
  std::int64_t step_count = 0;
  double mu_product = 1.0;
  int epoch_done = 0;
};

template <class Real>
void write_checkpoint(const std::string& path, const NetworkT<Real>& net,
                      const NadamT<Real>* opt = nullptr, int epoch_done = 0);

/// Reads the network (always into the requested Real) and, when present and
/// requested, the optimizer section.
template <class Real>
NetworkT<Real> read_checkpoint(const std::string& path, NadamT<Real>* opt = nullptr,
                               CheckpointExtra* extra = nullptr);

/// Stored dtype width of a checkpoint without loading it fully.
int checkpoint_dtype(const std::string& path);

}  // namespace mnnh2
