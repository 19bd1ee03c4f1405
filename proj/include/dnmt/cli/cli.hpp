#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "dnmt/inference/beam_search.hpp"
#include "dnmt/model/config.hpp"
#include "dnmt/training/trainer.hpp"
#include "dnmt/util/keyvalue.hpp"

namespace dnmt::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kUsageError = 2 };

// Every configuration key the tools accept, as a KeyValues of defaults.
util::KeyValues default_run_config();

// Merged config-file and override view. Unknown keys raise ContractError
// naming the key.
struct RunConfig {
  util::KeyValues values;

  static RunConfig resolve(const std::string& config_path,
                           const std::vector<std::string>& overrides);
  void set(const std::string& key, const std::string& value);

  model::ModelConfig model() const;
  training::TrainConfig train() const;
  inference::BeamOptions beam() const;
  std::size_t min_count() const;
};

// Entry point behind the `dnmt` executable. args excludes the program
// name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dnmt::cli
