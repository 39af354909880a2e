#pragma once

#include "run_config.hpp"

namespace mqf2::cli {

// Each command reads everything from the resolved config and writes into the
// output directory. The return value is the process exit code.
int cmd_synth(const Json& config);
int cmd_train(const Json& config);
int cmd_predict(const Json& config);
int cmd_evaluate(const Json& config);
int cmd_check(const Json& config);
int cmd_report(const Json& config);

/// Worker cap from MQF2_THREADS (default 1).
int thread_cap();

}  // namespace mqf2::cli
