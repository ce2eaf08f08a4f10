// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "../gradient_suite.hpp"
#include "../support.hpp"
#include "json.hpp"
#include "stratrob/cli/commands.hpp"
#include "stratrob/error.hpp"
#include "stratrob/eval.hpp"
#include "stratrob/infer.hpp"
#include "stratrob/train.hpp"

using namespace stratrob;
using utility::UncertaintySet;
using utility::UtilityMatrix;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// Shared desk setup: K = 6 in two groups of three, d = 5 unless overridden.
struct Desk {
    data::Split split;
    nn::DenseNet net0;
    train::TrainConfig cfg;
    eval::EvalSettings es;
};

Desk desk(std::uint64_t seed, double intra, double inter, std::size_t n, int epochs, std::size_t d = 5, double r = 0.9) {
    data::SynthParams p;
    p.d = d;
    p.intra_sep = intra;
    p.inter_sep = inter;
    p.noise_sd = 0.5;
    p.n_per_class = n;
    p.seed = 100 + seed;
    Desk k{data::train_test_split(data::synth_gaussian_groups(p), 0.3, seed),
           nn::DenseNet::random(std::vector<std::size_t>{d, 32, 6}, seed), {}, {}};
    k.cfg.epochs = epochs;
    k.cfg.batch_size = 32;
    k.cfg.base_lr = 0.1;
    k.cfg.seed = seed;
    k.cfg.lr_drop_epochs = {epochs * 3 / 4};
    k.cfg.attack.radius = r;
    k.cfg.attack.steps = 7;
    k.cfg.attack.step_size = r / 4;
    k.cfg.attack.random_start = true;
    k.es.spec.radius = r;
    k.es.spec.steps = 20;
    k.es.spec.step_size = r / 8;
    return k;
}

// Anti-semantic 1-hot: every class targets its counterpart in the other group.
UtilityMatrix cross_group_u() { return UtilityMatrix::from_targets(6, {{3}, {4}, {5}, {0}, {1}, {2}}); }

Outcome criterion1() {
    const auto check = testsupport::run_gradient_suite(100, 20240601);
    return {check.worst < 1e-4, fmt("%zu gradient entries, worst relative error %.2e", check.entries, check.worst)};
}

Outcome criterion2() {
    Rng rng(77);
    std::size_t instances = 0, dominance = 0, sequential = 0, monotone = 0;
    for (int n = 0; n < 50; ++n) {
        const std::size_t d = 1 + rng.uniform_int(3);
        const std::size_t K = 2 + rng.uniform_int(3);
        const auto net = testsupport::random_net(rng, d, K, rng.uniform_int(2), 6);
        data::Dataset ds;
        ds.d = d;
        ds.K = K;
        for (int i = 0; i < 8; ++i) {
            const auto x = testsupport::random_point(rng, d);
            // Half the labels agree with the net so attacks have something to flip.
            ds.add(x, i % 2 ? nn::predict(net, x) : rng.uniform_int(K));
        }
        eval::EvalSettings es;
        es.backend = eval::Backend::Oracle;
        es.grid_points = d == 3 ? 21 : 41;
        es.spec.radius = 0.2 + 0.6 * rng.uniform01();
        es.spec.step_size = es.spec.radius / 8;
        eval::AttackCache cache(net, ds, es);

        const auto clean = eval::correct_under(cache, eval::AttackRequest::none());
        const auto adv = eval::correct_under(cache, eval::AttackRequest::adversarial());
        for (int k = 0; k < 20; ++k) {
            std::vector<std::vector<double>> bin(K, std::vector<double>(K, 0.0)), real = bin;
            for (std::size_t y = 0; y < K; ++y)
                for (std::size_t t = 0; t < K; ++t) {
                    if (t == y) continue;
                    bin[y][t] = rng.uniform01() < 0.4 ? 1.0 : 0.0;
                    real[y][t] = rng.uniform01() < 0.5 ? rng.uniform01() : 0.0;
                }
            ++instances;
            const auto u = UtilityMatrix::from_rows(bin);
            const auto s = eval::correct_under(cache, eval::AttackRequest::strategic(u));
            if (!(clean >= s && s >= adv)) ++dominance;

            const auto ur = UtilityMatrix::from_rows(real);
            const auto seq = eval::attacked_predictions(cache, eval::AttackRequest::sequential(ur));
            for (std::size_t i = 0; i < ds.size(); ++i) {
                const std::size_t y = ds.y(i);
                const auto T = utility::targets_of(ur, y);
                auto in = [&](std::size_t p) { return std::find(T.begin(), T.end(), p) != T.end(); };
                if (in(seq[i]) != in(cache.strategic_prediction(i, T))) ++sequential;

                // A superset of T: add one random extra target.
                auto sup = utility::targets_of(u, y);
                const auto small = sup;
                const std::size_t extra = (y + 1 + rng.uniform_int(K - 1)) % K;
                if (std::find(sup.begin(), sup.end(), extra) == sup.end()) sup.push_back(extra);
                std::sort(sup.begin(), sup.end());
                auto hit = [&](const utility::TargetSet& S) {
                    const auto p = cache.strategic_prediction(i, S);
                    return std::find(S.begin(), S.end(), p) != S.end();
                };
                if (!small.empty() && hit(small) && !hit(sup)) ++monotone;
            }
        }
    }
    return {dominance + sequential + monotone == 0,
            fmt("%zu utility instances; violations: dominance %zu, sequential %zu, inclusion %zu", instances, dominance,
                sequential, monotone)};
}

Outcome criterion3() {
    data::SynthParams p;
    p.K = 4;
    p.d = 3;
    p.partition = utility::SemanticPartition({0, 0, 1, 1});
    p.intra_sep = 2.0;
    p.inter_sep = 4.0;
    p.noise_sd = 0.6;
    p.n_per_class = 50;
    p.seed = 9;
    const auto ds = data::synth_gaussian_groups(p);
    train::TrainConfig c;
    c.epochs = 10;
    c.base_lr = 0.1;
    const auto net = train::train_clean(nn::DenseNet::random(std::vector<std::size_t>{3, 16, 4}, 9), ds, c).net;
    eval::EvalSettings es;
    es.spec.radius = 0.7;
    es.spec.steps = 20;
    es.spec.step_size = 0.7 / 8;
    eval::AttackCache cache(net, ds, es);
    const auto w = eval::worst_case_accuracy(cache, UncertaintySet::all_k_hot(4, 1));
    const auto runs = cache.attacks_run();

    std::size_t best = SIZE_MAX, members = 0;
    std::vector<std::size_t> t(4);
    for (t[0] = 1; t[0] < 4; ++t[0])
        for (t[1] = 0; t[1] < 4; ++t[1])
            for (t[2] = 0; t[2] < 4; ++t[2])
                for (t[3] = 0; t[3] < 4; ++t[3]) {
                    if (t[1] == 1 || t[2] == 2 || t[3] == 3) continue;
                    ++members;
                    const auto u = UtilityMatrix::from_targets(4, {{t[0]}, {t[1]}, {t[2]}, {t[3]}});
                    best = std::min(best, eval::correct_under(cache, eval::AttackRequest::strategic(u)));
                }
    const bool shared = cache.attacks_run() == runs;
    return {members == 81 && w.correct == best && shared,
            fmt("factorized %zu correct, enumeration over %zu members %zu correct, attacks reused: %s", w.correct,
                members, best, shared ? "yes" : "no")};
}

Outcome criterion4() {
    const auto u = cross_group_u();
    int wins = 0;
    double margin = 0.0, clean_str = 0.0, clean_adv = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto k = desk(seed, 2.0, 6.0, 100, 60);
        const auto adv = train::train_adversarial(k.net0, k.split.train, k.cfg).net;
        const auto str = train::train_strategic_single(k.net0, k.split.train, k.cfg, u).net;
        const double sa = eval::accuracy_under(adv, k.split.test, eval::AttackRequest::strategic(u), k.es);
        const double ss = eval::accuracy_under(str, k.split.test, eval::AttackRequest::strategic(u), k.es);
        wins += ss > sa;
        margin += (ss - sa) / 5;
        clean_str += eval::accuracy_clean(str, k.split.test) / 5;
        clean_adv += eval::accuracy_clean(adv, k.split.test) / 5;
        per_seed += fmt(" %.3f/%.3f", ss, sa);
    }
    return {wins >= 4 && margin >= 0.02 && clean_str >= clean_adv,
            fmt("strategic wins %d/5, mean margin %+.1f points, mean clean %.3f vs %.3f; str/adv per seed:%s", wins,
                100 * margin, clean_str, clean_adv, per_seed.c_str())};
}

// Number of adjacent pairs that move the wrong way.
int inversions(const std::vector<double>& v, bool increasing) {
    int n = 0;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) n += increasing ? v[i + 1] < v[i] : v[i + 1] > v[i];
    return n;
}

Outcome criterion5() {
    const auto u = cross_group_u();
    const auto set = UncertaintySet::all_k_hot(6, 1);
    const std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> well(grid.size(), 0.0), mis(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g)
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const auto k = desk(seed, 2.0, 6.0, 300, 40);
            const auto net = train::train_mixed(k.net0, k.split.train, k.cfg, u, set, grid[g]).net;
            eval::AttackCache cache(net, k.split.test, k.es);
            well[g] += eval::accuracy_under(cache, eval::AttackRequest::strategic(u)) / 3;
            mis[g] += eval::worst_case_excluding(cache, set, u).accuracy / 3;
        }
    const int wi = inversions(well, false), mi = inversions(mis, true);
    std::string curve;
    for (std::size_t g = 0; g < grid.size(); ++g) curve += fmt(" eps=%.2f:%.3f/%.3f", grid[g], well[g], mis[g]);
    return {wi <= 1 && mi <= 1, fmt("inversions well %d, misspecified %d; well/mis means:%s", wi, mi, curve.c_str())};
}

// Writes a config, runs one subcommand and returns its exit code.
int run_cli(const fs::path& dir, const std::string& config, const std::string& command, int threads = 1) {
    spit(dir / "run.cfg", config);
    cli::Options o;
    o.config_path = (dir / "run.cfg").string();
    o.out_dir = (dir / "out").string();
    o.threads = threads;
    std::ostringstream err;
    const int code = cli::run_command(command, o, err);
    if (code != 0) std::fprintf(stderr, "%s %s failed: %s", dir.string().c_str(), command.c_str(), err.str().c_str());
    return code;
}

const char* kDeskConfig = R"(seed = 5
synth.K = 6
synth.d = 5
synth.groups = 0,0,0,1,1,1
synth.intra_sep = 2
synth.inter_sep = 6
synth.n_per_class = 60
synth.noise_sd = 0.5
split.test_fraction = 0.3
model.hidden = 32
train.lr = 0.1
train.attack = linf:r=0.9,steps=7,step=0.225,rand=1
eval.attack = linf:r=0.9,steps=20,step=0.1125,rand=0
objective.utility = one_hot:3,4,5,0,1,2
)";

const char* kDeskTraining = "train.epochs = 20\ntrain.lr_drops = 15\n";

Outcome criterion6() {
    struct Triple {
        double s, a, c, want;
    };
    bool exact = true;
    for (const auto& t : {Triple{0.7, 0.5, 0.9, 0.5}, Triple{0.5, 0.5, 0.9, 0.0}, Triple{0.9, 0.5, 0.9, 1.0}})
        exact = exact && std::abs(eval::deflection_rate(t.s, t.a, t.c) - t.want) < 1e-12;
    bool throws = false;
    try {
        eval::deflection_rate(0.5, 0.6, 0.6);
    } catch (const DomainError&) {
        throws = true;
    }

    const auto root = testsupport::temp_dir("accept_deflection");
    std::vector<fs::path> cks;
    for (const char* obj : {"strategic_single", "adversarial", "clean"}) {
        const auto dir = root / obj;
        fs::create_directories(dir);
        const std::string cfg = std::string(kDeskConfig) + "train.objective = " + obj + "\n" + kDeskTraining;
        if (run_cli(dir, cfg, "train") != 0)
            return {false, fmt("training the %s checkpoint failed", obj)};
        cks.push_back(dir / "out" / "checkpoint.json");
    }
    const std::string eval_cfg = std::string(kDeskConfig) + "train.objective = strategic_single\n" + kDeskTraining +
                                 "eval.suite = clean,deflection\neval.deflection.strategic = " + cks[0].string() +
                                 "\neval.deflection.adversarial = " + cks[1].string() +
                                 "\neval.deflection.clean = " + cks[2].string() + "\n";
    if (run_cli(root / "strategic_single", eval_cfg, "eval") != 0) return {false, "deflection eval failed"};
    const auto rep = nlohmann::json::parse(slurp(root / "strategic_single" / "out" / "report.json"));
    const auto& dj = rep["eval"]["deflection"];
    const double s = dj["strat_fstr"], a = dj["strat_fadv"], c = dj["clean_fcln"];
    bool in_range = true;
    std::string rate = "undefined";
    if (c > a) {
        const double r = dj["rate"];
        in_range = r >= 0.0 && r <= 1.0;
        rate = fmt("%.3f", r);
    }
    return {exact && throws && in_range,
            fmt("triples exact: %s; end-to-end strat_fstr %.3f, strat_fadv %.3f, clean_fcln %.3f, rate %s",
                exact && throws ? "yes" : "no", s, a, c, rate.c_str())};
}

// Adversarial model with 2r < intra_sep, so classes within a group stay robustly separable.
Outcome criterion7() {
    bool all_ok = true;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto k = desk(seed, 1.5, 8.0, 100, 40, 5, 0.6);
        const auto net = train::train_adversarial(k.net0, k.split.train, k.cfg).net;
        eval::AttackCache cache(net, k.split.test, k.es);
        const auto table = eval::target_accuracy_table(cache);
        const auto all = eval::enumerate_one_hots(table);
        std::vector<double> accs, pairs;
        for (const auto& o : all) {
            accs.push_back(o.accuracy);
            std::vector<utility::TargetSet> rows;
            for (auto t : o.targets) rows.push_back({t});
            pairs.push_back(static_cast<double>(
                eval::semantic_pair_count(UtilityMatrix::from_targets(6, rows), *k.split.test.partition)));
        }
        const double r = eval::pearson_correlation(accs, pairs);
        all_ok = all_ok && all.size() == 15625 && r <= -0.3;
        per_seed += fmt(" %.3f (clean %.3f)", r, eval::accuracy_clean(net, k.split.test));
    }
    return {all_ok, fmt("15625 opponents per seed; Pearson(accuracy, same-group pairs) per seed:%s", per_seed.c_str())};
}

Outcome criterion8() {
    bool self_ok = true;
    int vec_wins = 0;
    double acc1 = 0, acc3 = 0, ent1 = 0, ent3 = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto k = desk(seed, 2.0, 6.0, 300, 40, 16);
        const auto clean = train::train_clean(k.net0, k.split.train, k.cfg).net;
        const auto robust = train::train_adversarial(k.net0, k.split.train, k.cfg).net;
        auto sim = k.es.spec;
        auto opp = sim;
        opp.random_start = true;
        opp.seed = 77 + seed;

        const auto u_self = utility::k_hot_random(6, 1, seed);
        const auto self_log = infer::simulate_log(clean, k.split.test, u_self, sim, infer::LogMode::Delta);
        const auto self_inf = infer::infer_targets_vectors(self_log, clean, sim);
        const auto self_m = infer::inference_metrics(self_inf, infer::record_truth(self_log, u_self),
                                                     infer::reconstruct_matrix(self_log, self_inf, 6, 1), u_self);
        self_ok = self_ok && self_m.target_accuracy == 1.0 && self_m.included == self_log.records.size();

        for (std::size_t kk : {1, 3}) {
            const auto u = utility::k_hot_random(6, kk, 1000 + seed);
            const auto plog = infer::simulate_log(robust, k.split.test, u, opp, infer::LogMode::Prediction);
            const auto dlog = infer::simulate_log(robust, k.split.test, u, opp, infer::LogMode::Delta);
            const auto pinf = infer::infer_targets_predictions(plog);
            const auto vinf = infer::infer_targets_vectors(dlog, robust, sim);
            const auto pm = infer::inference_metrics(pinf, infer::record_truth(plog, u),
                                                     infer::reconstruct_matrix(plog, pinf, 6, kk), u);
            const auto vm = infer::inference_metrics(vinf, infer::record_truth(dlog, u),
                                                     infer::reconstruct_matrix(dlog, vinf, 6, kk), u);
            if (kk == 1) {
                vec_wins += vm.target_accuracy > pm.target_accuracy;
                per_seed += fmt(" %.3f/%.3f", vm.target_accuracy, pm.target_accuracy);
                acc1 += vm.target_accuracy / 5;
                ent1 += vm.entries_recovered / 5;
            } else {
                acc3 += vm.target_accuracy / 5;
                ent3 += vm.entries_recovered / 5;
            }
        }
    }
    const bool direction = acc3 > acc1 && ent3 < ent1;
    return {self_ok && vec_wins >= 4 && direction,
            fmt("self-consistency %s; vector beats predictions %d/5 (vec/pred:%s); k=3 vs k=1 target accuracy %.3f vs "
                "%.3f, entries %.3f vs %.3f",
                self_ok ? "100%" : "FAILED", vec_wins, per_seed.c_str(), acc3, acc1, ent3, ent1)};
}

Outcome criterion9() {
    const auto dir = testsupport::temp_dir("accept_determinism");
    const std::string cfg = std::string(kDeskConfig) +
                            "train.objective = mixed\nobjective.set = all_k_hot:1\nobjective.eps = 0.5\n"
                            "train.epochs = 6\neval.set = all_k_hot:1\n"
                            "eval.suite = clean,adv,strategic,sequential,worst_case,table,distribution,landscape\n";
    const std::vector<std::string> files{"checkpoint.json", "train_log.json", "train_log.csv", "report.json",
                                         "attack_distribution.csv", "target_table.csv", "landscape.csv"};
    std::vector<std::vector<std::string>> runs;
    for (int threads : {1, 1, 4}) {
        if (run_cli(dir, cfg, "train", threads) != 0 || run_cli(dir, cfg, "eval", threads) != 0)
            return {false, "a CLI run failed"};
        std::vector<std::string> bytes;
        for (const auto& f : files) bytes.push_back(slurp(dir / "out" / f));
        runs.push_back(std::move(bytes));
    }
    std::size_t differing = 0;
    for (std::size_t f = 0; f < files.size(); ++f) differing += runs[0][f] != runs[1][f] || runs[0][f] != runs[2][f];
    return {differing == 0, fmt("%zu output files compared across 3 runs (threads 1, 1, 4), %zu differ", files.size(),
                                differing)};
}

} // namespace

int main() {
    struct Criterion {
        int id;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, 10, criterion1},  {2, 300, criterion2},  {3, 120, criterion3},
        {4, 900, criterion4}, {5, 2700, criterion5}, {6, 600, criterion6},
        {7, 600, criterion7}, {8, 900, criterion8},  {9, 600, criterion9},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && secs < c.budget_s;
        failed += !pass;
        std::printf("%s criterion %d (%.1fs, budget %.0fs): %s\n", pass ? "PASS" : "FAIL", c.id, secs, c.budget_s,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
