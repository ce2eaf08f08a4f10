#include "stratrob/cli/commands.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "stratrob/error.hpp"
#include "stratrob/eval.hpp"
#include "stratrob/infer.hpp"
#include "stratrob/parallel.hpp"
#include "stratrob/rng.hpp"

namespace stratrob::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using utility::format_double;
using utility::UncertaintySet;
using utility::UtilityMatrix;

namespace {

std::string out_dir(const Options& opts) { return opts.out_dir.empty() ? "out" : opts.out_dir; }

fs::path prepare_out(const Options& opts) {
    const fs::path dir = out_dir(opts);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string& existing(const Config& cfg, const std::string& key) {
    const auto& path = cfg.get(key);
    if (!fs::exists(path)) throw ConfigError("key '" + key + "' references a missing file: " + path);
    return path;
}

std::size_t positive(const Config& cfg, const std::string& key, std::int64_t fallback) {
    const auto v = cfg.get_int(key, fallback);
    if (v <= 0) throw ConfigError("key '" + key + "' must be positive");
    return static_cast<std::size_t>(v);
}

attack::AttackSpec attack_spec(const Config& cfg, const std::string& key, const std::string& fallback) {
    try {
        return attack::AttackSpec::parse(cfg.get_or(key, fallback));
    } catch (const InputError& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

json matrix_json(const UtilityMatrix& u) {
    json rows = json::array();
    for (std::size_t y = 0; y < u.num_classes(); ++y) {
        const auto r = u.row(y);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
}

json counts_json(const std::vector<std::size_t>& counts, std::size_t K) {
    json rows = json::array();
    for (std::size_t y = 0; y < K; ++y)
        rows.push_back(std::vector<std::size_t>(counts.begin() + y * K, counts.begin() + (y + 1) * K));
    return rows;
}

std::string counts_csv(const std::vector<std::size_t>& counts, std::size_t K) {
    std::string out;
    for (std::size_t y = 0; y < K; ++y) {
        for (std::size_t t = 0; t < K; ++t) out += (t ? "," : "") + std::to_string(counts[y * K + t]);
        out += "\n";
    }
    return out;
}

std::string join_targets(const std::vector<std::size_t>& t) {
    std::string s;
    for (std::size_t i = 0; i < t.size(); ++i) s += (i ? " " : "") + std::to_string(t[i]);
    return s;
}

std::optional<utility::UtilityMatrix> objective_utility(const Config& cfg, const data::Dataset& ds) {
    if (!cfg.has("objective.utility")) return std::nullopt;
    return parse_utility(cfg.get("objective.utility"), cfg, ds);
}

std::vector<std::size_t> parse_indices(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(text)) {
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
            throw ConfigError(what + ": '" + item + "' is not a class index");
        out.push_back(v);
    }
    return out;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace

Config resolve_config(const Options& opts) {
    if (opts.config_path.empty()) throw ConfigError("--config is required");
    Config cfg = Config::load(opts.config_path);
    if (opts.seed) cfg.set("seed", std::to_string(*opts.seed));
    cfg.check_known();
    cfg.get_seed();
    if (opts.threads < 1) throw ConfigError("--threads must be at least 1");
    return cfg;
}

data::Dataset load_dataset(const Config& cfg) {
    const std::string source = cfg.get_or("data.source", "synth");
    if (source == "csv") {
        std::optional<std::size_t> K;
        if (cfg.has("data.K")) K = positive(cfg, "data.K", 0);
        data::Dataset ds = data::load_csv(existing(cfg, "data.path"), K);
        if (cfg.has("data.partition")) ds.partition = utility::load_partition(existing(cfg, "data.partition"));
        ds.validate();
        return ds;
    }
    if (source != "synth") throw ConfigError("data.source must be synth or csv");
    data::SynthParams p;
    p.K = positive(cfg, "synth.K", 6);
    p.d = positive(cfg, "synth.d", 5);
    if (cfg.has("synth.groups")) {
        std::vector<int> groups;
        for (auto g : cfg.get_ints("synth.groups")) groups.push_back(static_cast<int>(g));
        if (groups.size() != p.K) throw ConfigError("synth.groups must list one group per class");
        p.partition = utility::SemanticPartition(groups);
    } else {
        std::vector<int> groups(p.K);
        for (std::size_t y = 0; y < p.K; ++y) groups[y] = y < (p.K + 1) / 2 ? 0 : 1;
        p.partition = utility::SemanticPartition(groups);
    }
    p.intra_sep = cfg.get_double("synth.intra_sep", 1.0);
    p.inter_sep = cfg.get_double("synth.inter_sep", 4.0);
    p.n_per_class = positive(cfg, "synth.n_per_class", 100);
    p.noise_sd = cfg.get_double("synth.noise_sd", 0.5);
    p.seed = derive_seed(cfg.get_seed(), {0xda7a});
    return data::synth_gaussian_groups(p);
}

data::Split split_dataset(const Config& cfg, const data::Dataset& ds) {
    auto split = data::train_test_split(ds, cfg.get_double("split.test_fraction", 0.2),
                                        derive_seed(cfg.get_seed(), {0x5b11}));
    if (split.train.empty() || split.test.empty()) throw ConfigError("split.test_fraction leaves an empty split");
    return split;
}

UtilityMatrix parse_utility(const std::string& desc, const Config& cfg, const data::Dataset& ds) {
    const std::size_t K = ds.K;
    auto need_partition = [&]() -> const utility::SemanticPartition& {
        if (!ds.partition) throw ConfigError("utility '" + desc + "' needs a semantic partition");
        return *ds.partition;
    };
    if (desc == "adv") return utility::adversarial_utility(K);
    if (desc == "zero") return UtilityMatrix::zeros(K);
    if (desc == "semantic") return utility::semantic_representative(need_partition());
    if (desc == "anti_semantic") return utility::anti_semantic_representative(need_partition());
    if (desc.rfind("k_hot:", 0) == 0) {
        const auto k = parse_indices(desc.substr(6), "k_hot");
        if (k.size() != 1 || k[0] < 1 || k[0] >= K) throw ConfigError("k_hot:<k> needs 1 <= k < K");
        return utility::k_hot_random(K, k[0], derive_seed(cfg.get_seed(), {0x0107}));
    }
    if (desc.rfind("one_hot:", 0) == 0) {
        const auto t = parse_indices(desc.substr(8), "one_hot");
        if (t.size() != K) throw ConfigError("one_hot needs one target per class");
        std::vector<utility::TargetSet> rows;
        for (std::size_t y = 0; y < K; ++y) {
            if (t[y] >= K || t[y] == y) throw ConfigError("one_hot target of class " + std::to_string(y) + " is invalid");
            rows.push_back({t[y]});
        }
        return UtilityMatrix::from_targets(K, rows);
    }
    if (!fs::exists(desc)) throw ConfigError("utility '" + desc + "' is neither a known kind nor an existing file");
    auto u = utility::load_utility(desc);
    if (u.num_classes() != K) throw ConfigError("utility file " + desc + " has K=" + std::to_string(u.num_classes()));
    return u;
}

UncertaintySet parse_set(const std::string& desc, const Config& cfg, const data::Dataset& ds,
                         const std::optional<UtilityMatrix>& u) {
    const std::size_t K = ds.K;
    if (desc == "singleton") {
        if (!u) throw ConfigError("set 'singleton' needs objective.utility");
        return UncertaintySet::singleton(*u);
    }
    if (desc == "adv") return UncertaintySet::all_k_hot(K, K - 1);
    if (desc == "semantic" || desc == "anti_semantic") {
        if (!ds.partition) throw ConfigError("set '" + desc + "' needs a semantic partition");
        return desc == "semantic" ? UncertaintySet::semantic(*ds.partition) : UncertaintySet::anti_semantic(*ds.partition);
    }
    if (desc.rfind("all_k_hot:", 0) == 0) {
        const auto k = parse_indices(desc.substr(10), "all_k_hot");
        if (k.size() != 1 || k[0] < 1 || k[0] >= K) throw ConfigError("all_k_hot:<k> needs 1 <= k < K");
        return UncertaintySet::all_k_hot(K, k[0]);
    }
    if (desc.rfind("preference:", 0) == 0) {
        const std::string path = desc.substr(11);
        if (!fs::exists(path)) throw ConfigError("preference file not found: " + path);
        std::istringstream in(read_file(path));
        std::string line;
        std::vector<std::vector<std::size_t>> orderings;
        while (std::getline(in, line))
            if (line.find_first_not_of(" \t\r") != std::string::npos) orderings.push_back(parse_indices(line, "preference"));
        return UncertaintySet::preference(std::move(orderings));
    }
    if (desc.rfind("explicit:", 0) == 0) {
        std::vector<UtilityMatrix> members;
        for (const auto& path : split_list(desc.substr(9), ';')) members.push_back(parse_utility(path, cfg, ds));
        return UncertaintySet::explicit_set(std::move(members));
    }
    throw ConfigError("unknown uncertainty set '" + desc + "'");
}

train::TrainConfig build_train_config(const Config& cfg, const data::Dataset& ds, int threads) {
    train::TrainConfig tc;
    tc.epochs = static_cast<int>(cfg.get_int("train.epochs", 10));
    tc.batch_size = positive(cfg, "train.batch_size", 32);
    tc.base_lr = cfg.get_double("train.lr", 0.01);
    tc.momentum = cfg.get_double("train.momentum", 0.9);
    if (cfg.has("train.lr_drops"))
        for (auto e : cfg.get_ints("train.lr_drops")) tc.lr_drop_epochs.push_back(static_cast<int>(e));
    tc.attack = attack_spec(cfg, "train.attack", "paper-train");
    tc.seed = derive_seed(cfg.get_seed(), {0x7a1});
    if (cfg.has("train.noise_eps")) tc.noise_eps = cfg.get_double("train.noise_eps");
    tc.threads = threads;

    const std::string kind = cfg.get_or("train.objective", "clean");
    const auto u = objective_utility(cfg, ds);
    auto need_u = [&]() -> const UtilityMatrix& {
        if (!u) throw ConfigError("train.objective=" + kind + " needs objective.utility");
        return *u;
    };
    if (kind == "clean") tc.objective = train::Objective::clean();
    else if (kind == "adversarial") tc.objective = train::Objective::adversarial();
    else if (kind == "strategic_single") tc.objective = train::Objective::strategic_single(need_u());
    else if (kind == "strategic_set")
        tc.objective = train::Objective::strategic_set(parse_set(cfg.get("objective.set"), cfg, ds, u));
    else if (kind == "mixed")
        tc.objective = train::Objective::mixed(need_u(), parse_set(cfg.get("objective.set"), cfg, ds, u),
                                               cfg.get_double("objective.eps"));
    else if (kind == "sequential") tc.objective = train::Objective::sequential(need_u(), cfg.get_bool("train.fallback", false));
    else throw ConfigError("unknown train.objective '" + kind + "'");
    tc.validate(ds.K);
    return tc;
}

nn::DenseNet initial_net(const Config& cfg, std::size_t d, std::size_t K) {
    std::vector<std::size_t> widths{d};
    const std::string hidden = cfg.get_or("model.hidden", "32");
    if (hidden != "none")
        for (auto w : cfg.get_ints("model.hidden")) {
            if (w <= 0) throw ConfigError("model.hidden widths must be positive");
            widths.push_back(static_cast<std::size_t>(w));
        }
    widths.push_back(K);
    return nn::DenseNet::random(widths, derive_seed(cfg.get_seed(), {0x1417}));
}

std::string train_log_json(const train::TrainLog& log, const std::string& objective) {
    json j;
    j["objective"] = objective;
    j["path"] = log.path;
    j["response_calls"] = log.response_calls;
    j["attacked_examples"] = log.attacked_examples;
    j["mixing_draws"] = log.mixing_draws;
    j["mixing_replacements"] = log.mixing_replacements;
    j["fallbacks"] = log.fallbacks;
    json epochs = json::array();
    for (std::size_t e = 0; e < log.epochs.size(); ++e) {
        const auto& s = log.epochs[e];
        epochs.push_back({{"epoch", e}, {"lr", s.lr}, {"loss", s.loss}, {"accuracy", s.accuracy},
                          {"attack_success", s.attack_success}});
    }
    j["epochs"] = epochs;
    return j.dump(2);
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    json j;
    j["format"] = "stratrob-checkpoint";
    j["version"] = kToolVersion;
    j["config_hash"] = ck.config_hash;
    j["seed"] = ck.seed;
    j["objective"] = ck.objective;
    j["train_log"] = json::parse(ck.train_log_json);
    j["net"] = json::parse(nn::to_text(ck.net));
    write_file(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
    try {
        const json j = json::parse(read_file(path));
        if (j.at("format") != "stratrob-checkpoint") throw DataError("not a checkpoint: " + path);
        return Checkpoint{nn::from_text(j.at("net").dump()), j.at("config_hash").get<std::string>(),
                          j.at("seed").get<std::uint64_t>(), j.at("objective").get<std::string>(),
                          j.at("train_log").dump(2)};
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path + " is malformed: " + e.what());
    }
}

void cmd_gen_data(const Options& opts) {
    const Config cfg = resolve_config(opts);
    if (cfg.get_or("data.source", "synth") != "synth") throw ConfigError("gen-data needs data.source = synth");
    const auto ds = load_dataset(cfg);
    const auto dir = prepare_out(opts);
    data::save_csv(ds, (dir / "data.csv").string());
    utility::save(*ds.partition, (dir / "partition.txt").string());
}

void cmd_train(const Options& opts) {
    const Config cfg = resolve_config(opts);
    const auto ds = load_dataset(cfg);
    const auto split = split_dataset(cfg, ds);
    const auto tc = build_train_config(cfg, split.train, opts.threads);
    const auto net0 = initial_net(cfg, ds.d, ds.K);
    const auto dir = prepare_out(opts);

    auto result = train::train(net0, split.train, tc);
    result.log.checkpoint = (dir / "checkpoint.json").string();
    const std::string log_text = train_log_json(result.log, tc.objective.name());
    save_checkpoint({result.net, training_hash(cfg), cfg.get_seed(), tc.objective.name(), log_text},
                    result.log.checkpoint);
    write_file(dir / "train_log.json", log_text + "\n");
    std::string csv = "epoch,lr,loss,accuracy,attack_success\n";
    for (std::size_t e = 0; e < result.log.epochs.size(); ++e) {
        const auto& s = result.log.epochs[e];
        csv += std::to_string(e) + "," + format_double(s.lr) + "," + format_double(s.loss) + "," +
               format_double(s.accuracy) + "," + format_double(s.attack_success) + "\n";
    }
    write_file(dir / "train_log.csv", csv);
}

void cmd_eval(const Options& opts) {
    const Config cfg = resolve_config(opts);
    const auto dir = prepare_out(opts);
    const std::string ck_path = opts.checkpoint.empty() ? (dir / "checkpoint.json").string() : opts.checkpoint;
    const Checkpoint ck = load_checkpoint(ck_path);
    if (ck.config_hash != training_hash(cfg))
        throw ConfigError("checkpoint " + ck_path + " was trained under config hash " + ck.config_hash +
                          ", this config hashes to " + training_hash(cfg));

    const auto ds = load_dataset(cfg);
    const auto split = split_dataset(cfg, ds);
    const auto& test = split.test;
    if (ck.net.input_dim() != test.d || ck.net.num_classes() != test.K)
        throw ConfigError("checkpoint network does not match the dataset shape");

    eval::EvalSettings es;
    es.spec = attack_spec(cfg, "eval.attack", "paper-eval");
    es.threads = opts.threads;
    const std::string backend = cfg.get_or("eval.backend", "pgd");
    if (backend == "oracle") es.backend = eval::Backend::Oracle;
    else if (backend != "pgd") throw ConfigError("eval.backend must be pgd or oracle");
    es.grid_points = positive(cfg, "eval.grid_points", 21);

    std::vector<std::string> suite = split_list(cfg.get_or("eval.suite", "clean,adv"));
    auto wants = [&](const std::string& s) { return std::find(suite.begin(), suite.end(), s) != suite.end(); };
    for (const auto& s : suite)
        if (s != "clean" && s != "adv" && s != "strategic" && s != "sequential" && s != "worst_case" && s != "table" &&
            s != "distribution" && s != "landscape" && s != "deflection")
            throw ConfigError("unknown eval.suite entry '" + s + "'");

    const std::string udesc = cfg.get_or("eval.utility", cfg.get_or("objective.utility", ""));
    std::optional<UtilityMatrix> eval_u;
    if (!udesc.empty()) eval_u = parse_utility(udesc, cfg, ds);
    std::optional<UncertaintySet> eval_set;
    if (cfg.has("eval.set")) eval_set = parse_set(cfg.get("eval.set"), cfg, ds, eval_u);
    auto need_u = [&](const char* what) -> const UtilityMatrix& {
        if (!eval_u) throw ConfigError(std::string("eval.suite entry '") + what + "' needs eval.utility or objective.utility");
        return *eval_u;
    };
    auto need_set = [&](const char* what) -> const UncertaintySet& {
        if (!eval_set) throw ConfigError(std::string("eval.suite entry '") + what + "' needs eval.set");
        return *eval_set;
    };

    // Resolve every requirement before any attack is run.
    if (wants("strategic")) need_u("strategic");
    if (wants("sequential")) need_u("sequential");
    if (wants("worst_case")) need_set("worst_case");
    std::optional<std::array<Checkpoint, 3>> deflection_nets;
    if (wants("deflection")) {
        if (!eval_set) need_u("deflection");
        deflection_nets = std::array<Checkpoint, 3>{load_checkpoint(existing(cfg, "eval.deflection.strategic")),
                                                    load_checkpoint(existing(cfg, "eval.deflection.adversarial")),
                                                    load_checkpoint(existing(cfg, "eval.deflection.clean"))};
    }
    const std::string dist_kind = cfg.get_or("eval.distribution", "adv");
    if (dist_kind != "adv" && dist_kind != "strategic" && dist_kind != "clean")
        throw ConfigError("eval.distribution must be adv, strategic or clean");
    if (wants("distribution") && dist_kind == "strategic") need_u("distribution");
    const std::size_t bins = positive(cfg, "eval.landscape.bins", 10);
    const std::size_t per_bin = positive(cfg, "eval.landscape.per_bin", 15);

    eval::AttackCache cache(ck.net, test, es);
    json ev;
    ev["attack"] = es.spec.to_string();
    ev["backend"] = backend;
    ev["n_test"] = test.size();
    ev["clean_acc"] = eval::accuracy_clean(ck.net, test);
    if (wants("adv")) ev["adv_acc"] = eval::accuracy_under(cache, eval::AttackRequest::adversarial());
    if (wants("strategic"))
        ev["strategic_accs"] = {{udesc, eval::accuracy_under(cache, eval::AttackRequest::strategic(*eval_u))}};
    if (wants("sequential"))
        ev["sequential_accs"] = {{udesc, eval::accuracy_under(cache, eval::AttackRequest::sequential(*eval_u))}};
    if (wants("worst_case")) {
        const auto w = eval::worst_case_accuracy(cache, *eval_set);
        ev["worst_case"] = {{"set", cfg.get("eval.set")}, {"accuracy", w.accuracy}, {"utility", matrix_json(w.utility)}};
    }
    if (wants("distribution")) {
        eval::AttackRequest req = dist_kind == "adv" ? eval::AttackRequest::adversarial()
                                  : dist_kind == "strategic" ? eval::AttackRequest::strategic(*eval_u)
                                                             : eval::AttackRequest::none();
        const auto counts = eval::attack_distribution(cache, req);
        ev["attack_distribution"] = {{"attack", dist_kind}, {"counts", counts_json(counts, test.K)}};
        write_file(dir / "attack_distribution.csv", counts_csv(counts, test.K));
    }
    if (wants("table") || wants("landscape")) {
        const auto table = eval::target_accuracy_table(cache);
        json rows = json::array();
        std::string csv;
        for (std::size_t y = 0; y < table.K; ++y) {
            std::vector<double> row;
            for (std::size_t t = 0; t < table.K; ++t) {
                row.push_back(table(y, t));
                csv += (t ? "," : "") + format_double(table(y, t));
            }
            csv += "\n";
            rows.push_back(row);
        }
        ev["target_table"] = rows;
        write_file(dir / "target_table.csv", csv);
        if (wants("landscape")) {
            const auto land = eval::one_hot_landscape(table, bins, per_bin, derive_seed(cfg.get_seed(), {0x1a4d}));
            json lj;
            lj["exhaustive"] = land.exhaustive;
            lj["easiest"] = {{"targets", land.easiest.targets}, {"accuracy", land.easiest.accuracy}};
            lj["hardest"] = {{"targets", land.hardest.targets}, {"accuracy", land.hardest.accuracy}};
            json jb = json::array();
            std::string lcsv = "bin,lo,hi,count,accuracy,semantic_pairs,targets\n";
            for (std::size_t b = 0; b < land.bins.size(); ++b) {
                const auto& bin = land.bins[b];
                jb.push_back({{"lo", bin.lo}, {"hi", bin.hi}, {"count", bin.count}, {"samples", bin.samples.size()}});
                for (const auto& s : bin.samples) {
                    std::string pairs;
                    if (ds.partition) {
                        std::vector<utility::TargetSet> rows1;
                        for (auto t : s.targets) rows1.push_back({t});
                        pairs = std::to_string(
                            eval::semantic_pair_count(UtilityMatrix::from_targets(test.K, rows1), *ds.partition));
                    }
                    lcsv += std::to_string(b) + "," + format_double(bin.lo) + "," + format_double(bin.hi) + "," +
                            std::to_string(bin.count) + "," + format_double(s.accuracy) + "," + pairs + "," +
                            join_targets(s.targets) + "\n";
                }
            }
            lj["bins"] = jb;
            if (ds.partition && land.exhaustive) {
                std::vector<double> accs, pairs;
                for (const auto& o : eval::enumerate_one_hots(table)) {
                    std::vector<utility::TargetSet> rows1;
                    for (auto t : o.targets) rows1.push_back({t});
                    accs.push_back(o.accuracy);
                    pairs.push_back(static_cast<double>(
                        eval::semantic_pair_count(UtilityMatrix::from_targets(test.K, rows1), *ds.partition)));
                }
                try {
                    lj["semantic_correlation"] = eval::pearson_correlation(accs, pairs);
                } catch (const DomainError&) {
                    lj["semantic_correlation"] = nullptr;
                }
            }
            ev["landscape"] = lj;
            write_file(dir / "landscape.csv", lcsv);
        }
    }
    if (deflection_nets) {
        auto strat_acc = [&](const nn::DenseNet& net) {
            if (net.input_dim() != test.d || net.num_classes() != test.K)
                throw ConfigError("deflection checkpoint does not match the dataset shape");
            eval::AttackCache c(net, test, es);
            return eval_set ? eval::worst_case_accuracy(c, *eval_set).accuracy
                            : eval::accuracy_under(c, eval::AttackRequest::strategic(*eval_u));
        };
        const auto& [str, adv, cln] = *deflection_nets;
        const double s_str = strat_acc(str.net), s_adv = strat_acc(adv.net);
        const double c_cln = eval::accuracy_clean(cln.net, test);
        json dj = {{"strat_fstr", s_str}, {"strat_fadv", s_adv}, {"clean_fcln", c_cln}};
        if (c_cln > s_adv) dj["rate"] = eval::deflection_rate(s_str, s_adv, c_cln);
        else dj["rate"] = nullptr;
        ev["deflection"] = dj;
    }

    json report;
    report["tool"] = "stratrob";
    report["version"] = kToolVersion;
    report["config_hash"] = ck.config_hash;
    report["seed"] = cfg.get_seed();
    report["checkpoint"] = ck_path;
    report["train"] = json::parse(ck.train_log_json);
    report["train"].erase("epochs");
    report["eval"] = ev;
    write_file(dir / "report.json", report.dump(2) + "\n");
}

void cmd_infer(const Options& opts) {
    Config cfg = resolve_config(opts);
    if (!opts.log.empty()) cfg.set("infer.log", opts.log);
    const auto log = infer::load_log(existing(cfg, "infer.log"));
    log.validate();
    const std::string method = cfg.get_or("infer.method", "pred");
    const std::size_t k = positive(cfg, "infer.k", 1);
    if (k >= log.K) throw ConfigError("infer.k must be below K");

    std::vector<std::optional<std::size_t>> inferred;
    if (method == "pred") {
        if (log.mode != infer::LogMode::Prediction) throw ConfigError("infer.method=pred needs a mode=pred log");
        inferred = infer::infer_targets_predictions(log);
    } else if (method == "vector") {
        if (log.mode != infer::LogMode::Delta) throw ConfigError("infer.method=vector needs a mode=delta log");
        const auto spec = attack_spec(cfg, "infer.attack", "paper-eval");
        if (spec.radius != log.radius)
            throw ConfigError("infer.attack radius " + format_double(spec.radius) + " does not match the log radius " +
                              format_double(log.radius));
        const auto ck = load_checkpoint(existing(cfg, "infer.checkpoint"));
        inferred = infer::infer_targets_vectors(log, ck.net, spec, opts.threads);
    } else {
        throw ConfigError("infer.method must be pred or vector");
    }
    const auto u = infer::reconstruct_matrix(log, inferred, log.K, k);
    const auto dir = prepare_out(opts);
    utility::save(u, (dir / "inferred_utility.txt").string());

    json j;
    j["tool"] = "stratrob";
    j["version"] = kToolVersion;
    j["seed"] = cfg.get_seed();
    j["method"] = method;
    j["k"] = k;
    j["records"] = log.records.size();
    j["inferred_utility"] = matrix_json(u);
    std::string csv = "record,y,inferred\n";
    for (std::size_t r = 0; r < inferred.size(); ++r)
        csv += std::to_string(r) + "," + std::to_string(log.records[r].y) + "," +
               (inferred[r] ? std::to_string(*inferred[r]) : std::string{}) + "\n";
    write_file(dir / "inferred_targets.csv", csv);
    if (cfg.has("infer.truth")) {
        const auto truth = utility::load_utility(existing(cfg, "infer.truth"));
        if (truth.num_classes() != log.K) throw ConfigError("infer.truth has the wrong K");
        const auto m = infer::inference_metrics(inferred, infer::record_truth(log, truth), u, truth);
        j["metrics"] = {{"target_accuracy", m.target_accuracy}, {"entries_recovered", m.entries_recovered},
                        {"included", m.included}};
    }
    write_file(dir / "infer.json", j.dump(2) + "\n");
}

void cmd_sweep(const Options& opts) {
    const Config base = resolve_config(opts);
    const auto eps_grid = base.get_doubles("sweep.eps");
    std::vector<std::uint64_t> seeds;
    for (auto s : base.get_ints("sweep.seeds")) {
        if (s < 0) throw ConfigError("sweep.seeds must be non-negative");
        seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (eps_grid.empty() || seeds.empty()) throw ConfigError("sweep.eps and sweep.seeds must be non-empty");
    for (double e : eps_grid)
        if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("sweep.eps entries must lie in [0, 1]");
    base.get("objective.utility");
    base.get("objective.set");

    struct Run {
        double eps;
        std::uint64_t seed;
        double well = 0.0, mis = 0.0, clean = 0.0;
    };
    std::vector<Run> runs;
    for (double e : eps_grid)
        for (auto s : seeds) runs.push_back({e, s});

    // Validate every run's inputs up front so configuration errors surface before training.
    std::vector<Config> cfgs;
    for (const auto& r : runs) {
        Config c = base;
        c.set("seed", std::to_string(r.seed));
        c.set("train.objective", "mixed");
        c.set("objective.eps", format_double(r.eps));
        const auto ds = load_dataset(c);
        build_train_config(c, split_dataset(c, ds).train, 1);
        cfgs.push_back(std::move(c));
    }
    const auto es_spec = attack_spec(base, "eval.attack", "paper-eval");

    parallel_for(runs.size(), opts.threads, [&](std::size_t i) {
        const Config& c = cfgs[i];
        const auto ds = load_dataset(c);
        const auto split = split_dataset(c, ds);
        const auto tc = build_train_config(c, split.train, 1);
        const auto net = train::train(initial_net(c, ds.d, ds.K), split.train, tc).net;
        eval::EvalSettings es;
        es.spec = es_spec;
        eval::AttackCache cache(net, split.test, es);
        const auto& u = *tc.objective.u;
        runs[i].well = eval::accuracy_under(cache, eval::AttackRequest::strategic(u));
        runs[i].mis = eval::worst_case_excluding(cache, *tc.objective.set, u).accuracy;
        runs[i].clean = eval::accuracy_clean(net, split.test);
    });

    json j;
    j["tool"] = "stratrob";
    j["version"] = kToolVersion;
    j["config_hash"] = training_hash(base);
    j["utility"] = base.get("objective.utility");
    j["set"] = base.get("objective.set");
    json jr = json::array();
    std::string csv = "eps,seed,well_specified,misspecified,clean\n";
    for (const auto& r : runs) {
        jr.push_back({{"eps", r.eps}, {"seed", r.seed}, {"well_specified", r.well}, {"misspecified", r.mis},
                      {"clean", r.clean}});
        csv += format_double(r.eps) + "," + std::to_string(r.seed) + "," + format_double(r.well) + "," +
               format_double(r.mis) + "," + format_double(r.clean) + "\n";
    }
    j["runs"] = jr;
    json agg = json::array();
    for (double e : eps_grid) {
        std::vector<double> w, m, c;
        for (const auto& r : runs)
            if (r.eps == e) {
                w.push_back(r.well);
                m.push_back(r.mis);
                c.push_back(r.clean);
            }
        agg.push_back({{"eps", e}, {"n", w.size()}, {"well_specified_mean", mean_of(w)}, {"well_specified_std", std_of(w)},
                       {"misspecified_mean", mean_of(m)}, {"misspecified_std", std_of(m)},
                       {"clean_mean", mean_of(c)}, {"clean_std", std_of(c)}});
    }
    j["aggregate"] = agg;
    const auto dir = prepare_out(opts);
    write_file(dir / "sweep.json", j.dump(2) + "\n");
    write_file(dir / "sweep.csv", csv);
}

int run_command(const std::string& command, const Options& opts, std::ostream& err) {
    try {
        if (command == "gen-data") cmd_gen_data(opts);
        else if (command == "train") cmd_train(opts);
        else if (command == "eval") cmd_eval(opts);
        else if (command == "infer") cmd_infer(opts);
        else if (command == "sweep") cmd_sweep(opts);
        else throw ConfigError("unknown command '" + command + "'");
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InputError& e) {
        err << "invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

} // namespace stratrob::cli
