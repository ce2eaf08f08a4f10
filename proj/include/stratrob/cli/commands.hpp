#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "stratrob/cli/config.hpp"
#include "stratrob/data.hpp"
#include "stratrob/nn.hpp"
#include "stratrob/train.hpp"
#include "stratrob/utility.hpp"

namespace stratrob::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2 };

/// Global flags shared by every subcommand.
struct Options {
    std::string config_path;
    std::string out_dir;               // empty: "out"
    std::optional<std::uint64_t> seed; // overrides the config's seed
    int threads = 1;
    std::string checkpoint;            // eval; empty: <out>/checkpoint.json
    std::string log;                   // infer; overrides infer.log
};

/// Loads the config, applies the seed override and rejects unknown keys or a missing seed.
Config resolve_config(const Options& opts);

/// Generator output when data.source = synth (the default), else the CSV at data.path.
data::Dataset load_dataset(const Config& cfg);
data::Split split_dataset(const Config& cfg, const data::Dataset& ds);

/// adv | zero | semantic | anti_semantic | k_hot:<k> | one_hot:<t0,...> | <utility file>.
utility::UtilityMatrix parse_utility(const std::string& desc, const Config& cfg, const data::Dataset& ds);

/// singleton | adv | all_k_hot:<k> | semantic | anti_semantic | preference:<file> | explicit:<f1;f2;...>.
/// singleton wraps `u`, which must then be present.
utility::UncertaintySet parse_set(const std::string& desc, const Config& cfg, const data::Dataset& ds,
                                  const std::optional<utility::UtilityMatrix>& u);

train::TrainConfig build_train_config(const Config& cfg, const data::Dataset& ds, int threads);
nn::DenseNet initial_net(const Config& cfg, std::size_t d, std::size_t K);

struct Checkpoint {
    nn::DenseNet net;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string objective;
    std::string train_log_json; // serialized TrainLog summary
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string train_log_json(const train::TrainLog& log, const std::string& objective);

void cmd_gen_data(const Options& opts);
void cmd_train(const Options& opts);
void cmd_eval(const Options& opts);
void cmd_infer(const Options& opts);
void cmd_sweep(const Options& opts);

/// Runs a subcommand and maps exceptions to exit codes: configuration, parse and
/// validation failures give 2, everything else 1. Messages go to `err`.
int run_command(const std::string& command, const Options& opts, std::ostream& err);

} // namespace stratrob::cli
