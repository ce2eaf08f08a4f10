#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "stratrob/attack.hpp"
#include "stratrob/data.hpp"
#include "stratrob/nn.hpp"
#include "stratrob/utility.hpp"

namespace stratrob::infer {

using nn::Vector;
using utility::TargetSet;
using utility::UtilityMatrix;

enum class LogMode { Prediction, Delta };

struct AttackRecord {
    Vector x;
    std::size_t y = 0;
    std::size_t predicted = 0; // Prediction mode
    Vector delta;              // Delta mode

    bool operator==(const AttackRecord&) const = default;
};

/// Observed attacks on one deployed net.
struct AttackLog {
    std::size_t d = 0;
    std::size_t K = 0;
    double radius = 0.0;
    LogMode mode = LogMode::Prediction;
    std::vector<AttackRecord> records;

    /// Throws DataError on shape, label or radius violations.
    void validate() const;

    bool operator==(const AttackLog&) const = default;
};

/// Header "d=<int>,K=<int>,radius=<float>,mode=<pred|delta>", then one record
/// per line: d features, y, and either the prediction or d delta values.
std::string to_text(const AttackLog& log);
AttackLog log_from_text(const std::string& text);
void save(const AttackLog& log, const std::string& path);
AttackLog load_log(const std::string& path);

/// Attacks every example whose class has targets under u with the strategic
/// response and records what an observer would see.
AttackLog simulate_log(const nn::DenseNet& net, const data::Dataset& data, const UtilityMatrix& u,
                       const attack::AttackSpec& spec, LogMode mode);

/// Inferred target = observed prediction; records predicted as y are excluded (nullopt).
std::vector<std::optional<std::size_t>> infer_targets_predictions(const AttackLog& log);

/// Simulates a targeted attack toward every t != y and returns the target whose
/// delta is L2-closest to the logged one. Ties prefer the class that x + delta
/// is predicted as, then the lower index. The attack radius must match the log;
/// random starts are disabled.
std::vector<std::optional<std::size_t>> infer_targets_vectors(const AttackLog& log, const nn::DenseNet& net,
                                                              const attack::AttackSpec& spec, int threads = 1);

/// Per source class, ones at the k most frequent inferred targets (lower index on
/// ties, positive counts only). Rows without observations stay zero.
UtilityMatrix reconstruct_matrix(const AttackLog& log, const std::vector<std::optional<std::size_t>>& inferred,
                                 std::size_t K, std::size_t k);

struct InferenceMetrics {
    double target_accuracy = 0.0;  // over records with an inferred target
    double entries_recovered = 0.0; // over off-diagonal entries
    std::size_t included = 0;
};

/// A record counts as correct when its inferred target lies in its true target set.
InferenceMetrics inference_metrics(const std::vector<std::optional<std::size_t>>& inferred,
                                   const std::vector<TargetSet>& record_truth, const UtilityMatrix& reconstructed,
                                   const UtilityMatrix& truth);

/// True target set of every record under u.
std::vector<TargetSet> record_truth(const AttackLog& log, const UtilityMatrix& u);

} // namespace stratrob::infer
