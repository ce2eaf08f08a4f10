#include "doctest.h"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "stratrob/cli/commands.hpp"
#include "stratrob/error.hpp"
#include "stratrob/eval.hpp"
#include "stratrob/infer.hpp"
#include "support.hpp"

using namespace stratrob;
using namespace stratrob::cli;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

const char* kBase = R"(seed = 3
synth.K = 4
synth.d = 4
synth.groups = 0,0,1,1
synth.intra_sep = 2
synth.inter_sep = 5
synth.n_per_class = 30
synth.noise_sd = 0.4
model.hidden = 12
train.batch_size = 16
train.attack = linf:r=0.4,steps=3,step=0.15,rand=0
eval.attack = linf:r=0.4,steps=8,step=0.1,rand=0
)";

struct Run {
    fs::path dir;
    Options opts;
    std::ostringstream err;
    int code = -1;

    Run(const std::string& name, const std::string& config) : dir(testsupport::temp_dir(name)) {
        spit(dir / "run.cfg", config);
        opts.config_path = (dir / "run.cfg").string();
        opts.out_dir = (dir / "out").string();
    }
    int operator()(const std::string& cmd) {
        err.str({});
        code = run_command(cmd, opts, err);
        return code;
    }
    json read_json(const std::string& file) const { return json::parse(slurp(dir / "out" / file)); }
};

} // namespace

TEST_CASE("config parsing") {
    const auto c = Config::parse("# comment\nseed = 4  # trailing\n train.lr=0.5\n\n");
    CHECK(c.get_seed() == 4);
    CHECK(c.get_double("train.lr") == 0.5);
    CHECK(c.get_or("train.epochs", "7") == "7");
    CHECK_THROWS_AS(Config::parse("seed 4\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("seed = 1\nseed = 2\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("train.lr = x\n").get_double("train.lr"), ConfigError);
    CHECK_THROWS_AS(Config::parse("seed = 1\nbogus.key = 2\n").check_known(), ConfigError);
    try {
        Config::parse("train.lr = 1\n").get_seed();
        FAIL("missing seed accepted");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("seed") != std::string::npos);
    }
    CHECK(split_list("a, b ,c") == std::vector<std::string>{"a", "b", "c"});
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("training hash covers training keys only") {
    auto a = Config::parse(kBase);
    auto b = a;
    b.set("eval.attack", "r=1,steps=1,step=1,rand=0");
    b.set("infer.k", "2");
    CHECK(training_hash(a) == training_hash(b));
    b.set("train.lr", "0.06");
    CHECK_FALSE(training_hash(a) == training_hash(b));
    b = a;
    b.set("seed", "4");
    CHECK_FALSE(training_hash(a) == training_hash(b));
}

TEST_CASE("configuration failures exit with code 2") {
    SUBCASE("missing seed names the key") {
        Run r("cli_noseed", "synth.K = 4\n");
        CHECK(r("train") == kExitConfig);
        CHECK(r.err.str().find("seed") != std::string::npos);
    }
    SUBCASE("unknown key") {
        Run r("cli_unknown", std::string(kBase) + "train.bogus = 1\n");
        CHECK(r("train") == kExitConfig);
        CHECK(r.err.str().find("train.bogus") != std::string::npos);
    }
    SUBCASE("invalid utility file") {
        Run r("cli_badu", "");
        spit(r.dir / "u.txt", "0 1.5 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n");
        spit(r.dir / "run.cfg", std::string(kBase) + "train.objective = strategic_single\nobjective.utility = " +
                                    (r.dir / "u.txt").string() + "\n");
        CHECK(r("train") == kExitConfig);
        CHECK_FALSE(fs::exists(r.dir / "out" / "checkpoint.json"));
    }
    SUBCASE("unknown subcommand and missing config") {
        Run r("cli_misc", kBase);
        CHECK(r("fly") == kExitConfig);
        r.opts.config_path = (r.dir / "absent.cfg").string();
        CHECK(r("train") == kExitConfig);
    }
    SUBCASE("empty sweep grid") {
        Run r("cli_sweep_empty", std::string(kBase) + "sweep.eps =\nsweep.seeds = 1\nobjective.utility = k_hot:1\n"
                                                      "objective.set = all_k_hot:1\n");
        CHECK(r("sweep") == kExitConfig);
        CHECK_FALSE(fs::exists(r.dir / "out" / "sweep.json"));
    }
}

TEST_CASE("gen-data") {
    Run r("cli_gen", kBase);
    REQUIRE(r("gen-data") == kExitOk);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(r.dir / "out")) files += e.is_regular_file();
    CHECK(files == 2);
    const auto csv = slurp(r.dir / "out" / "data.csv");
    const auto ds = data::parse_csv(csv);
    CHECK(ds.size() == 4 * 30);
    CHECK(ds.d == 4);
    const auto part = utility::partition_from_text(slurp(r.dir / "out" / "partition.txt"));
    CHECK(part == utility::SemanticPartition({0, 0, 1, 1}));
    REQUIRE(r("gen-data") == kExitOk);
    CHECK(slurp(r.dir / "out" / "data.csv") == csv);

    // The CSV source reproduces the generated dataset.
    Run c("cli_csv", std::string("seed = 3\ndata.source = csv\ndata.path = ") + (r.dir / "out" / "data.csv").string() +
                         "\ndata.partition = " + (r.dir / "out" / "partition.txt").string() + "\n");
    const auto loaded = load_dataset(resolve_config(c.opts));
    CHECK(loaded.features == ds.features);
    CHECK(loaded.partition == part);
}

TEST_CASE("train, eval and rerun") {
    Run r("cli_train", std::string(kBase) + "train.objective = clean\ntrain.epochs = 20\ntrain.lr = 0.1\n"
                                            "eval.suite = clean,adv,strategic,worst_case,table,distribution,landscape\n"
                                            "eval.utility = k_hot:1\neval.set = all_k_hot:1\n");
    REQUIRE(r("train") == kExitOk);
    for (const char* f : {"checkpoint.json", "train_log.json", "train_log.csv"}) CHECK(fs::exists(r.dir / "out" / f));
    const auto ck = load_checkpoint((r.dir / "out" / "checkpoint.json").string());
    CHECK(ck.config_hash == training_hash(resolve_config(r.opts)));
    CHECK(ck.seed == 3);

    REQUIRE(r("eval") == kExitOk);
    const auto rep = r.read_json("report.json");
    CHECK(rep["config_hash"] == ck.config_hash);
    const auto& ev = rep["eval"];
    CHECK(ev["clean_acc"].get<double>() >= 0.95);
    CHECK(ev["adv_acc"].get<double>() <= ev["clean_acc"].get<double>());
    CHECK(ev["strategic_accs"]["k_hot:1"].get<double>() >= ev["worst_case"]["accuracy"].get<double>());
    CHECK(ev["target_table"].size() == 4);
    CHECK(ev["landscape"]["exhaustive"] == true);
    CHECK(ev["attack_distribution"]["counts"].size() == 4);
    for (const char* f : {"attack_distribution.csv", "target_table.csv", "landscape.csv"})
        CHECK(fs::exists(r.dir / "out" / f));

    const auto ck_bytes = slurp(r.dir / "out" / "checkpoint.json");
    const auto rep_bytes = slurp(r.dir / "out" / "report.json");
    r.opts.threads = 3;
    REQUIRE(r("train") == kExitOk);
    REQUIRE(r("eval") == kExitOk);
    CHECK(slurp(r.dir / "out" / "checkpoint.json") == ck_bytes);
    CHECK(slurp(r.dir / "out" / "report.json") == rep_bytes);

    SUBCASE("stale checkpoint") {
        spit(r.dir / "run.cfg", slurp(r.dir / "run.cfg") + "train.momentum = 0.5\n");
        CHECK(r("eval") == kExitConfig);
        CHECK(r.err.str().find("hash") != std::string::npos);
    }
    SUBCASE("seed override changes the hash") {
        r.opts.seed = 9;
        CHECK(r("eval") == kExitConfig);
    }
}

TEST_CASE("strategic training over a semantic set uses the representative") {
    Run r("cli_sem", std::string(kBase) + "train.objective = strategic_set\nobjective.set = semantic\ntrain.epochs = 1\n");
    REQUIRE(r("train") == kExitOk);
    const auto log = r.read_json("train_log.json");
    CHECK(log["path"] == "representative");
    CHECK(log["objective"] == "strategic_set");
}

TEST_CASE("infer from a prediction log") {
    Run r("cli_infer", std::string(kBase) + "train.objective = clean\ntrain.epochs = 20\ntrain.lr = 0.1\n");
    REQUIRE(r("train") == kExitOk);
    const auto cfg = resolve_config(r.opts);
    const auto ds = load_dataset(cfg);
    const auto split = split_dataset(cfg, ds);
    const auto ck = load_checkpoint((r.dir / "out" / "checkpoint.json").string());
    const auto truth = utility::UtilityMatrix::from_targets(4, {{2}, {3}, {1}, {0}});
    utility::save(truth, (r.dir / "truth.txt").string());

    auto spec = attack::AttackSpec::parse("linf:r=4,steps=200,step=0.05,rand=0");
    infer::save(infer::simulate_log(ck.net, split.test, truth, spec, infer::LogMode::Prediction),
                (r.dir / "pred.log").string());
    infer::save(infer::simulate_log(ck.net, split.test, truth, spec, infer::LogMode::Delta),
                (r.dir / "delta.log").string());

    spit(r.dir / "run.cfg", slurp(r.dir / "run.cfg") + "infer.truth = " + (r.dir / "truth.txt").string() + "\n");
    r.opts.log = (r.dir / "pred.log").string();
    REQUIRE(r("infer") == kExitOk);
    const auto j = r.read_json("infer.json");
    CHECK(j["metrics"]["entries_recovered"].get<double>() == 1.0);
    CHECK(j["metrics"]["target_accuracy"].get<double>() == 1.0);
    CHECK(utility::load_utility((r.dir / "out" / "inferred_utility.txt").string()) == truth);
    CHECK(fs::exists(r.dir / "out" / "inferred_targets.csv"));

    SUBCASE("vector method needs a matching radius") {
        spit(r.dir / "run.cfg", slurp(r.dir / "run.cfg") + "infer.method = vector\ninfer.checkpoint = " +
                                    (r.dir / "out" / "checkpoint.json").string() +
                                    "\ninfer.attack = linf:r=2,steps=200,step=0.05,rand=0\n");
        r.opts.log = (r.dir / "delta.log").string();
        CHECK(r("infer") == kExitConfig);
        CHECK(r.err.str().find("radius") != std::string::npos);
    }
    SUBCASE("method and log mode must agree") {
        r.opts.log = (r.dir / "delta.log").string();
        CHECK(r("infer") == kExitConfig);
    }
}

TEST_CASE("sweep over mixing rates") {
    Run r("cli_sweep", std::string(kBase) + "train.epochs = 1\nobjective.utility = k_hot:1\n"
                                            "objective.set = all_k_hot:1\nsweep.eps = 0,0.5,1\nsweep.seeds = 1,2,3\n");
    r.opts.threads = 3;
    REQUIRE(r("sweep") == kExitOk);
    const auto j = r.read_json("sweep.json");
    CHECK(j["runs"].size() == 9);
    CHECK(j["aggregate"].size() == 3);
    for (const auto& a : j["aggregate"]) CHECK(a["n"] == 3);
    for (const auto& run : j["runs"]) {
        CHECK(run["misspecified"].get<double>() >= 0.0);
    }
    const auto csv = slurp(r.dir / "out" / "sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
}
