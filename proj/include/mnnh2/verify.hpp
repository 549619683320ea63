#pragma once

#include <ostream>
#include <string>

namespace mnnh2 {

/// Self-check suites behind the command-line `verify` subcommand. Each
/// prints one line per check to `out` and returns whether all passed.
bool verify_tree(std::ostream& out);
bool verify_linear(std::ostream& out);
bool verify_grad(std::ostream& out);
bool verify_params(std::ostream& out);

/// Runs one suite by name (tree|linear|grad|params) or all of them ("all").
bool run_verify_suite(const std::string& name, std::ostream& out);

}  // namespace mnnh2
