#pragma once

#include "prema/config.hpp"

namespace prema {

// Exit codes shared by the CLI: 0 success, 1 validation error, 2 I/O error,
// 3 checkpoint/CRC error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitCheckpoint = 3;

int cmd_generate(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_evaluate(const RunConfig& config);
int cmd_ablate(const RunConfig& config);
int cmd_robust(const RunConfig& config);

}  // namespace prema
