#pragma once

#include "plte/model.hpp"
#include "plte/trainer.hpp"

#include <string>

namespace plte {

// Everything the key=value config file can set. The training-time dropout
// rates are mirrored into the model config by resolve().
struct Config {
  ModelConfig model;
  TrainConfig train;

  // Syncs shared knobs (dropout rates, gru hidden width) into the model
  // config and validates.
  void resolve();
};

Config load_config_file(const std::string& path);

// "no-lasa" drops the relation tables, "no-porous" drops the pivot and the
// neighbor mask, "none" leaves the config alone.
void apply_ablation(Config& cfg, const std::string& mode);

}  // namespace plte
