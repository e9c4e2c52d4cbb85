#pragma once

// Two-stage training.
//
// Stage I minimizes L_MSD + beta * L_CCE over every network. Stage II keeps
// the teachers frozen (and the encoder, disentangling and enhancement nets
// too when stage2_freeze_stage1 is set) and minimizes
//   L_task + zeta L_MSD + beta L_CCE + gamma L_EMC + eta L_IMTD,
// where each representation first takes one energy-descent step. Disabled
// modules contribute a zero term.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ebmc/cce.hpp"
#include "ebmc/emc.hpp"
#include "ebmc/fusion.hpp"
#include "ebmc/imtd.hpp"
#include "ebmc/metrics.hpp"
#include "ebmc/msd.hpp"
#include "ebmc/nn.hpp"
#include "ebmc/settings.hpp"
#include "ebmc/synthetic.hpp"

namespace ebmc::train {

struct Model {
  nn::ParamStore store;
  std::vector<std::string> modalities;
  std::vector<std::size_t> input_dims;
  std::size_t num_classes = 0;
  fusion::TaskMode mode = fusion::TaskMode::Classification;
  ModelDims dims;
  msd::MsdNetworks msd;
  cce::CceNetworks cce;
  fusion::FusionNetworks head;

  /// Fresh model with Glorot-initialized weights drawn from `seed`.
  static Model create(const std::vector<std::string>& modalities, const std::vector<std::size_t>& input_dims,
                      std::size_t num_classes, fusion::TaskMode mode, const ModelDims& dims, std::uint64_t seed);
  /// Shape-compatible model for a batch.
  static Model for_batch(const data::MultimodalBatch& batch, std::size_t num_classes, const ModelDims& dims,
                         std::uint64_t seed);

  /// Throws DimensionError naming both shapes when `batch` does not fit.
  void check_compatible(const data::MultimodalBatch& batch) const;
};

enum class Stage { One = 1, Two = 2 };

/// Every loss component of one step (scalars) plus the weights applied to
/// form l_total.
struct StepLosses {
  double l_task = 0.0, l_msd = 0.0, l_inv = 0.0, l_dis = 0.0, l_uni = 0.0;
  double l_cce = 0.0, l_rec = 0.0, l_task_enh = 0.0;
  double l_emc = 0.0, l_gap = 0.0, l_imtd = 0.0, l_total = 0.0;
  double w_task = 0.0, w_msd = 0.0, w_cce = 0.0, w_emc = 0.0, w_imtd = 0.0;
};

struct EpochRecord {
  Stage stage = Stage::One;
  std::size_t epoch = 0;  // 1-based, counted across both stages
  StepLosses losses;      // batch means
  double train_accuracy = 0.0;
  emc::EnergyReport energy;                  // end-of-epoch model on the training set
  std::vector<imtd::TrustSummaryRow> trust;  // Stage II only
  double seconds = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
};

/// Raised when a loss turns non-finite.
class TrainingAbort : public std::runtime_error {
 public:
  TrainingAbort(const std::string& what, Stage stage, std::size_t epoch, std::size_t batch, std::uint64_t batch_seed,
                std::vector<double> energies);
  Stage stage;
  std::size_t epoch;
  std::size_t batch;
  std::uint64_t batch_seed;
  std::vector<double> energies;
};

struct TrainHooks {
  /// Called with the trust weights of every Stage II batch.
  std::function<void(const imtd::TrustWeights&, const data::BoolMatrix& present)> on_trust;
  /// Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// One step's objective before backward.
struct StepObjective {
  ad::Tensor total;
  StepLosses losses;
  std::vector<emc::ModalityEnergy> energies;  // Stage II with EMC on
  std::optional<imtd::TrustWeights> trust;    // Stage II
  ad::Tensor logits;                          // detached fused logits
};

/// L_MSD + beta * L_CCE on one batch.
StepObjective stage1_objective(const Model& model, const TrainConfig& config, const nn::Bindings& params,
                               const data::MultimodalBatch& batch, std::uint64_t step_seed);

/// The parts of a Stage II step that enter the objective as constants: the
/// loss and entropy parts of each energy gradient (true labels for L_EMC,
/// teacher pseudo-labels for the descent step), the trust weights and the
/// frozen teachers' logits. Computed from `params` at the current point.
struct HeldTerms {
  std::vector<ad::Tensor> energy_auxiliary;
  std::vector<ad::Tensor> descent_auxiliary;
  imtd::TrustWeights trust;
  std::vector<ad::Tensor> teacher_logits;
};
HeldTerms held_terms(const Model& model, const TrainConfig& config, const nn::Bindings& params,
                     const nn::Bindings& frozen, const data::MultimodalBatch& batch, std::uint64_t step_seed);

/// The full weighted Stage II objective on one batch.
StepObjective stage2_objective(const Model& model, const TrainConfig& config, const nn::Bindings& params,
                               const data::MultimodalBatch& batch, std::uint64_t step_seed, const HeldTerms& held);

void train_stage1(Model& model, const TrainConfig& config, const data::MultimodalBatch& train, RunLog& log,
                  const TrainHooks& hooks = {});
void train_stage2(Model& model, const TrainConfig& config, const data::MultimodalBatch& train, RunLog& log,
                  const TrainHooks& hooks = {});

/// Fresh model, both stages.
Model train_model(const TrainConfig& config, const data::MultimodalBatch& train, std::size_t num_classes,
                  RunLog& log, const TrainHooks& hooks = {});

/// Inference logits: encode, one energy-descent step with teacher-argmax
/// pseudo-labels when EMC is enabled, noise-free enhancement, fusion.
ad::Tensor predict_logits(const Model& model, const TrainConfig& config, const data::MultimodalBatch& batch);
metrics::MetricRecord evaluate(const Model& model, const TrainConfig& config, const data::MultimodalBatch& batch);
/// Accuracy of teacher m's argmax on rows where modality m is present.
double teacher_accuracy(const Model& model, const data::MultimodalBatch& batch, std::size_t m);

/// Mean cross-modal cosine of shared and of specific components over rows
/// where both modalities are present.
struct AlignmentReport {
  double shared_cosine = 0.0;
  double specific_cosine = 0.0;
};
AlignmentReport alignment(const Model& model, const data::MultimodalBatch& batch);

struct ConditionMetrics {
  std::string condition;
  metrics::MetricRecord metrics;
};

/// "full" plus one row per disabled set in `ablations`, each trained from the
/// same seed. An empty ablation set reproduces "full" and is skipped.
std::vector<ConditionMetrics> run_ablation(const TrainConfig& config, const data::MultimodalBatch& train,
                                           const data::MultimodalBatch& test, std::size_t num_classes,
                                           const std::set<Module>& disable);

enum class Protocol { ModalityMissing, FeatureDropout };
Protocol parse_protocol(const std::string& name);
const char* to_string(Protocol p);

/// Dropout rates 0, 0.1, ..., 0.9.
std::vector<double> dropout_rates();

/// "p=0.1" style condition name of a dropout rate.
std::string dropout_condition(double p);
/// Feature dropout at rate p with the seed that run_robustness uses for it.
data::MultimodalBatch apply_dropout_condition(const data::MultimodalBatch& test, double p, std::uint64_t seed);

/// ModalityMissing: one row per non-empty modality subset, keyed "a+b".
/// FeatureDropout: one row per rate ("p=0.1") plus "average", the mean of each
/// metric over the rates.
std::vector<ConditionMetrics> run_robustness(const Model& model, const TrainConfig& config,
                                             const data::MultimodalBatch& test, Protocol protocol,
                                             std::uint64_t seed);

/// Per-modality energy-report rows of a batch, for diagnostics.
emc::EnergyReport energy_report(const Model& model, const TrainConfig& config, const data::MultimodalBatch& batch);

}  // namespace ebmc::train
