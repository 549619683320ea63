#include "mnnh2/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace mnnh2 {

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::int64_t out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw error("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw error("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw error("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace

void RunConfig::validate() const {
  network.validate();
  problem.validate();
  if (problem.N != network.N)
    throw shape_error("config: problem N (" + std::to_string(problem.N) +
                      ") must match network N (" + std::to_string(network.N) + ")");
  check(network.dtype_bytes == 4 || network.dtype_bytes == 8, "config: dtype must be 4 or 8 bytes");
  check(training.epochs >= 0, "config: epochs must be >= 0");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw error("config: line " + std::to_string(lineno) + " is not key=value: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "problem") {
      if (val == "nlse")
        cfg.problem.problem = Problem::nlse;
      else if (val == "rte")
        cfg.problem.problem = Problem::rte;
      else if (val == "ks")
        cfg.problem.problem = Problem::ks;
      else
        throw error("config: problem must be nlse|rte|ks, got '" + val + "'");
    } else if (key == "d") {
      cfg.network.d = static_cast<int>(to_int(key, val));
    } else if (key == "N") {
      cfg.network.N = to_int(key, val);
      cfg.problem.N = cfg.network.N;
    } else if (key == "L") {
      cfg.network.L = static_cast<int>(to_int(key, val));
    } else if (key == "m") {
      cfg.network.m = static_cast<int>(to_int(key, val));
    } else if (key == "r") {
      cfg.network.r = static_cast<int>(to_int(key, val));
    } else if (key == "K") {
      cfg.network.K = static_cast<int>(to_int(key, val));
    } else if (key == "sharing") {
      if (val == "lc")
        cfg.network.sharing = SharingMode::lc;
      else if (val == "cnn")
        cfg.network.sharing = SharingMode::cnn;
      else if (val == "mixed")
        cfg.network.sharing = SharingMode::mixed;
      else
        throw error("config: sharing must be lc|cnn|mixed, got '" + val + "'");
    } else if (key == "padding") {
      if (val == "periodic")
        cfg.network.padding = PadMode::periodic;
      else if (val == "zero")
        cfg.network.padding = PadMode::zero;
      else
        throw error("config: padding must be periodic|zero, got '" + val + "'");
    } else if (key == "activation") {
      if (val == "relu")
        cfg.network.activation = Activation::relu;
      else if (val == "linear")
        cfg.network.activation = Activation::linear;
      else
        throw error("config: activation must be relu|linear, got '" + val + "'");
    } else if (key == "nb_ad") {
      cfg.network.nb_ad = static_cast<int>(to_int(key, val));
    } else if (key == "sigma_init") {
      cfg.network.sigma_init = to_double(key, val);
    } else if (key == "dtype") {
      if (val == "float64")
        cfg.network.dtype_bytes = 8;
      else if (val == "float32")
        cfg.network.dtype_bytes = 4;
      else
        throw error("config: dtype must be float64|float32, got '" + val + "'");
    } else if (key == "n_g") {
      cfg.problem.n_g = static_cast<int>(to_int(key, val));
    } else if (key == "n_e") {
      cfg.problem.n_e = static_cast<int>(to_int(key, val));
    } else if (key == "beta") {
      cfg.problem.beta = to_double(key, val);
    } else if (key == "mu_a") {
      cfg.problem.mu_a = to_double(key, val);
    } else if (key == "source_f") {
      cfg.problem.source_f = to_double(key, val);
    } else if (key == "ks_sigma") {
      cfg.problem.ks_sigma = to_double(key, val);
    } else if (key == "epochs") {
      cfg.training.epochs = static_cast<int>(to_int(key, val));
    } else if (key == "batch") {
      cfg.training.batch = to_int(key, val);
    } else if (key == "lr") {
      cfg.optimizer.lr = to_double(key, val);
    } else if (key == "beta1") {
      cfg.optimizer.beta1 = to_double(key, val);
    } else if (key == "beta2") {
      cfg.optimizer.beta2 = to_double(key, val);
    } else if (key == "epsilon") {
      cfg.optimizer.epsilon = to_double(key, val);
    } else if (key == "seed") {
      cfg.training.seed = static_cast<std::uint64_t>(to_int(key, val));
    } else if (key == "shuffle") {
      cfg.training.shuffle = to_bool(key, val);
    } else if (key == "checkpoint_every") {
      cfg.training.checkpoint_every = static_cast<int>(to_int(key, val));
    } else if (key == "metrics") {
      cfg.metrics_path = val;
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(to_int(key, val));
    } else {
      throw error("config: unknown key '" + key + "'");
    }
  }
  cfg.training.threads = cfg.threads;
  cfg.training.metrics_path = cfg.metrics_path;
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string default_run_config() {
  return R"(# problem: nlse|rte|ks
problem = nlse
# grid points per axis; must equal 2^L * m
N = 80
# spatial dimension of the network (data generation is 1D)
d = 1
L = 4
m = 5
# channels per level
r = 6
# kernel layers per level and per adjacent stack
K = 5
# weight sharing: lc|cnn|mixed
sharing = cnn
# padding for kernel layers: periodic|zero
padding = periodic
# activation of the non-hard-wired layers: relu|linear
activation = relu
# adjacent band size
nb_ad = 1
# stddev of the normal weight init
sigma_init = 0.02
# compute/storage precision: float64|float32
dtype = float64
# bumps in the NLSE/RTE input field
n_g = 2
# electrons (= wells) for the Kohn-Sham map
n_e = 2
beta = 10
mu_a = 0.2
source_f = 1
ks_sigma = 0.05
epochs = 500
# 0 selects ceil(count/100)
batch = 0
lr = 0.001
beta1 = 0.9
beta2 = 0.999
epsilon = 1e-8
seed = 1
shuffle = 1
# save a checkpoint every k epochs (0: only at the end)
checkpoint_every = 0
metrics = metrics.csv
# worker threads (0: hardware)
threads = 1
)";
}

// ---------------------------------------------------------------------------
// Binary helpers
// ---------------------------------------------------------------------------
namespace {

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  store_le_u32(v, b);
  put_bytes(out, b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  store_le_u64(v, b);
  put_bytes(out, b, 8);
}

void put_f64(std::ostream& out, double v) {
  unsigned char b[8];
  store_le_f64(v, b);
  put_bytes(out, b, 8);
}

void put_u8(std::ostream& out, std::uint8_t v) { put_bytes(out, &v, 1); }

struct Reader {
  std::vector<unsigned char> bytes;
  std::size_t pos = 0;
  std::string name;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw error(name + ": truncated file");
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = load_le_u32(bytes.data() + pos);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    const std::uint64_t v = load_le_u64(bytes.data() + pos);
    pos += 8;
    return v;
  }
  double f64() {
    need(8);
    const double v = load_le_f64(bytes.data() + pos);
    pos += 8;
    return v;
  }
  void magic(const char* m) {
    need(8);
    if (std::memcmp(bytes.data() + pos, m, 8) != 0)
      throw error(name + ": bad magic, not a recognized file");
    pos += 8;
  }
  bool at_end() const { return pos == bytes.size(); }
  bool peek_magic(const char* m) const {
    return pos + 8 <= bytes.size() && std::memcmp(bytes.data() + pos, m, 8) == 0;
  }
};

Reader slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("io: cannot open " + path);
  Reader r;
  r.name = path;
  in.seekg(0, std::ios::end);
  r.bytes.resize(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));
  return r;
}

void put_scalar_array(std::ostream& out, const double* p, std::size_t n, int dtype_bytes) {
  std::vector<unsigned char> buf(n * static_cast<std::size_t>(dtype_bytes));
  if (dtype_bytes == 8)
    for (std::size_t i = 0; i < n; ++i) store_le_f64(p[i], buf.data() + 8 * i);
  else
    for (std::size_t i = 0; i < n; ++i) store_le_f32(static_cast<float>(p[i]), buf.data() + 4 * i);
  put_bytes(out, buf.data(), buf.size());
}

void get_scalar_array(Reader& r, double* p, std::size_t n, int dtype_bytes) {
  r.need(n * static_cast<std::size_t>(dtype_bytes));
  if (dtype_bytes == 8)
    for (std::size_t i = 0; i < n; ++i) p[i] = load_le_f64(r.bytes.data() + r.pos + 8 * i);
  else
    for (std::size_t i = 0; i < n; ++i)
      p[i] = static_cast<double>(load_le_f32(r.bytes.data() + r.pos + 4 * i));
  r.pos += n * static_cast<std::size_t>(dtype_bytes);
}

constexpr char kDatasetMagic[9] = "MNH2DS1\0";
constexpr char kCheckpointMagic[9] = "MNH2CK1\0";
constexpr char kOptimizerMagic[9] = "MNH2OP1\0";

}  // namespace

// ---------------------------------------------------------------------------
// Dataset file
// ---------------------------------------------------------------------------
void write_dataset(const std::string& path, const Dataset& ds, int dtype_bytes) {
  ds.validate();
  check(dtype_bytes == 4 || dtype_bytes == 8, "write_dataset: dtype must be 4 or 8");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("write_dataset: cannot open " + path);
  put_bytes(out, kDatasetMagic, 8);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(ds.d));
  for (int a = 0; a < ds.d; ++a) put_u32(out, static_cast<std::uint32_t>(ds.N));
  put_u32(out, static_cast<std::uint32_t>(ds.count()));
  put_u8(out, static_cast<std::uint8_t>(dtype_bytes));
  for (std::int64_t i = 0; i < ds.count(); ++i) {
    put_scalar_array(out, ds.inputs[i].data.data(), ds.inputs[i].data.size(), dtype_bytes);
    put_scalar_array(out, ds.targets[i].data.data(), ds.targets[i].data.size(), dtype_bytes);
  }
  if (!out) throw error("write_dataset: write failed for " + path);
}

Dataset read_dataset(const std::string& path, int* dtype_bytes) {
  Reader r = slurp(path);
  r.magic(kDatasetMagic);
  const std::uint32_t version = r.u32();
  if (version != 1) throw error(path + ": unsupported dataset version " + std::to_string(version));
  Dataset ds;
  ds.d = static_cast<int>(r.u32());
  check(ds.d == 1 || ds.d == 2, path + ": bad dimension");
  std::int64_t n = 0;
  for (int a = 0; a < ds.d; ++a) {
    const std::int64_t na = r.u32();
    if (a == 0)
      n = na;
    else
      check(na == n, path + ": anisotropic grids are not supported");
  }
  ds.N = n;
  const std::int64_t count = r.u32();
  const int dt = r.u8();
  check(dt == 4 || dt == 8, path + ": bad dtype tag");
  if (dtype_bytes) *dtype_bytes = dt;
  const std::vector<std::int64_t> shape =
      ds.d == 1 ? std::vector<std::int64_t>{1, n} : std::vector<std::int64_t>{1, n, n};
  const std::size_t numel = static_cast<std::size_t>(ds.d == 1 ? n : n * n);
  ds.inputs.resize(count);
  ds.targets.resize(count);
  for (std::int64_t i = 0; i < count; ++i) {
    ds.inputs[i] = Tensor(shape);
    get_scalar_array(r, ds.inputs[i].data.data(), numel, dt);
    ds.targets[i] = Tensor(shape);
    get_scalar_array(r, ds.targets[i].data.data(), numel, dt);
  }
  if (!r.at_end()) throw error(path + ": trailing bytes after payload");
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Checkpoint file
// ---------------------------------------------------------------------------
namespace {

void put_network_config(std::ostream& out, const NetworkConfig& cfg) {
  put_u32(out, 1);
  put_u8(out, static_cast<std::uint8_t>(cfg.d));
  put_u32(out, static_cast<std::uint32_t>(cfg.N));
  put_u32(out, static_cast<std::uint32_t>(cfg.L));
  put_u32(out, static_cast<std::uint32_t>(cfg.m));
  put_u32(out, static_cast<std::uint32_t>(cfg.r));
  put_u32(out, static_cast<std::uint32_t>(cfg.K));
  put_u8(out, static_cast<std::uint8_t>(cfg.sharing));
  put_u8(out, static_cast<std::uint8_t>(cfg.padding));
  put_u8(out, static_cast<std::uint8_t>(cfg.activation));
  put_u32(out, static_cast<std::uint32_t>(cfg.nb_ad));
  put_u32(out, static_cast<std::uint32_t>(cfg.nb_level2));
  put_u32(out, static_cast<std::uint32_t>(cfg.nb_coarse));
  put_f64(out, cfg.sigma_init);
  put_u8(out, static_cast<std::uint8_t>(cfg.dtype_bytes));
}

NetworkConfig get_network_config(Reader& r) {
  const std::uint32_t version = r.u32();
  if (version != 1)
    throw error(r.name + ": unsupported checkpoint version " + std::to_string(version));
  NetworkConfig cfg;
  cfg.d = r.u8();
  cfg.N = r.u32();
  cfg.L = static_cast<int>(r.u32());
  cfg.m = static_cast<int>(r.u32());
  cfg.r = static_cast<int>(r.u32());
  cfg.K = static_cast<int>(r.u32());
  cfg.sharing = static_cast<SharingMode>(r.u8());
  cfg.padding = static_cast<PadMode>(r.u8());
  cfg.activation = static_cast<Activation>(r.u8());
  cfg.nb_ad = static_cast<int>(r.u32());
  cfg.nb_level2 = static_cast<int>(r.u32());
  cfg.nb_coarse = static_cast<int>(r.u32());
  cfg.sigma_init = r.f64();
  cfg.dtype_bytes = r.u8();
  cfg.validate();
  return cfg;
}

template <class Real>
void put_blob(std::ostream& out, const std::vector<Real>& v, int dtype_bytes) {
  put_u64(out, v.size() * static_cast<std::uint64_t>(dtype_bytes));
  std::vector<double> tmp(v.begin(), v.end());
  put_scalar_array(out, tmp.data(), tmp.size(), dtype_bytes);
}

template <class Real>
void get_blob(Reader& r, std::vector<Real>& v, int dtype_bytes, std::size_t expect) {
  const std::uint64_t bytes = r.u64();
  if (bytes != expect * static_cast<std::uint64_t>(dtype_bytes))
    throw error(r.name + ": blob length mismatch");
  std::vector<double> tmp(expect);
  get_scalar_array(r, tmp.data(), expect, dtype_bytes);
  v.assign(tmp.begin(), tmp.end());
}

}  // namespace

template <class Real>
void write_checkpoint(const std::string& path, const NetworkT<Real>& net,
                      const NadamT<Real>* opt, int epoch_done) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("write_checkpoint: cannot open " + path);
  const int dt = net.cfg.dtype_bytes;
  put_bytes(out, kCheckpointMagic, 8);
  put_network_config(out, net.cfg);
  put_u32(out, static_cast<std::uint32_t>(net.num_layers()));
  for (int i = 0; i < net.num_layers(); ++i) {
    put_blob(out, net.layer_at(i)->W, dt);
    put_blob(out, net.layer_at(i)->b, dt);
  }
  if (opt) {
    put_bytes(out, kOptimizerMagic, 8);
    put_u32(out, 1);
    put_u64(out, static_cast<std::uint64_t>(opt->step_count));
    put_f64(out, opt->mu_product);
    put_u32(out, static_cast<std::uint32_t>(epoch_done));
    for (int i = 0; i < net.num_layers(); ++i) {
      put_blob(out, opt->m_w[i], 8);
      put_blob(out, opt->v_w[i], 8);
      put_blob(out, opt->m_b[i], 8);
      put_blob(out, opt->v_b[i], 8);
    }
  }
  if (!out) throw error("write_checkpoint: write failed for " + path);
}

template <class Real>
NetworkT<Real> read_checkpoint(const std::string& path, NadamT<Real>* opt,
                               CheckpointExtra* extra) {
  Reader r = slurp(path);
  r.magic(kCheckpointMagic);
  const NetworkConfig cfg = get_network_config(r);
  NetworkT<Real> net = build_mnn_h2<Real>(cfg, 0);
  const std::uint32_t n_layers = r.u32();
  if (static_cast<int>(n_layers) != net.num_layers())
    throw error(path + ": layer count mismatch");
  for (int i = 0; i < net.num_layers(); ++i) {
    get_blob(r, net.layer_at(i)->W, cfg.dtype_bytes, net.layer_at(i)->W.size());
    get_blob(r, net.layer_at(i)->b, cfg.dtype_bytes, net.layer_at(i)->b.size());
  }
  if (r.peek_magic(kOptimizerMagic)) {
    r.magic(kOptimizerMagic);
    const std::uint32_t version = r.u32();
    if (version != 1) throw error(path + ": unsupported optimizer section");
    CheckpointExtra ex;
    ex.step_count = static_cast<std::int64_t>(r.u64());
    ex.mu_product = r.f64();
    ex.epoch_done = static_cast<int>(r.u32());
    if (opt) {
      opt->init(net);
      opt->step_count = ex.step_count;
      opt->mu_product = ex.mu_product;
    }
    for (int i = 0; i < net.num_layers(); ++i) {
      std::vector<Real> tmp;
      auto read_into = [&](std::vector<Real>* dst, std::size_t expect) {
        get_blob(r, dst ? *dst : tmp, 8, expect);
      };
      read_into(opt ? &opt->m_w[i] : nullptr, net.layer_at(i)->W.size());
      read_into(opt ? &opt->v_w[i] : nullptr, net.layer_at(i)->W.size());
      read_into(opt ? &opt->m_b[i] : nullptr, net.layer_at(i)->b.size());
      read_into(opt ? &opt->v_b[i] : nullptr, net.layer_at(i)->b.size());
    }
    if (extra) *extra = ex;
  } else if (extra) {
    *extra = CheckpointExtra{};
  }
  if (!r.at_end()) throw error(path + ": trailing bytes after payload");
  return net;
}

int checkpoint_dtype(const std::string& path) {
  Reader r = slurp(path);
  r.magic(kCheckpointMagic);
  return get_network_config(r).dtype_bytes;
}

template void write_checkpoint<double>(const std::string&, const NetworkT<double>&,
                                       const NadamT<double>*, int);
template void write_checkpoint<float>(const std::string&, const NetworkT<float>&,
                                      const NadamT<float>*, int);
template NetworkT<double> read_checkpoint<double>(const std::string&, NadamT<double>*,
                                                  CheckpointExtra*);
template NetworkT<float> read_checkpoint<float>(const std::string&, NadamT<float>*,
                                                CheckpointExtra*);

}  // namespace mnnh2
