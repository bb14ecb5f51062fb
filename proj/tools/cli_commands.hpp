#pragma once

#include <functional>
#include <string>

#include "cli_config.hpp"

namespace netspectra::cli {

// Exit codes: 0 success, 2 config error, 3 I/O or corruption, 4 numerical.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumerical = 4;

/// Runs a command body and maps exceptions onto the exit-code contract.
int run_guarded(const std::function<void()>& body);

struct HessianArgs {
  std::string checkpoint;
  std::string mode = "dense";  // dense | lanczos
  int k = 0;                   // 0: analysis.lanczos_k
  std::string out;             // default <out_dir>/hessian.eig
};

struct AnalyzeArgs {
  std::string kind;
  std::string checkpoint;
  std::string trajectory;
  std::string basis_a;
  std::string basis_b;
  int layer = -1;  // kScopeWholeNet
  int index = 0;
  std::string ordering = "magnitude";
  std::string source = "weights";
  std::string out_dir;  // default run config out_dir
};

void cmd_train(const RunConfig& cfg);
void cmd_hessian(const RunConfig& cfg, const HessianArgs& args);
void cmd_analyze(const RunConfig& cfg, const AnalyzeArgs& args);

}  // namespace netspectra::cli
