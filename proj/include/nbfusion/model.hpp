// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "nbfusion/config.hpp"
#include "nbfusion/curriculum.hpp"
#include "nbfusion/encoders.hpp"
#include "nbfusion/grad_check.hpp"
#include "nbfusion/metrics.hpp"
#include "nbfusion/optim.hpp"
#include "nbfusion/prmf.hpp"
#include "nbfusion/synthdata.hpp"

namespace nbf {

struct EmbeddingDataset {
    std::vector<EmbeddingRecord> train;
    std::vector<EmbeddingRecord> val;
    std::size_t d_i = 0;
    std::size_t d_t = 0;
    std::size_t classes = 3;

    static EmbeddingDataset from_synth(const SynthDataset& ds);
    static EmbeddingDataset from_records(std::vector<EmbeddingRecord> train,
                                         std::vector<EmbeddingRecord> val, std::size_t d_i,
                                         std::size_t d_t, std::size_t classes = 3);
    void validate() const;
};

// Replaces every text vector with its corrupted form at the given level.
void precorrupt_text(EmbeddingDataset& data, double level, std::uint64_t seed);

// Fusion classifier over precomputed embeddings. The ablation flags select
// the forward graph: gated fusion (default), concat+affine fusion, fixed
// alpha, or a single branch.
class FusionClassifier {
public:
    FusionClassifier(const PrmfConfig& cfg, const AblationFlags& flags, std::uint64_t seed);

    const PrmfConfig& config() const { return prmf_.cfg; }
    const AblationFlags& flags() const { return flags_; }
    PrmfParams& prmf() { return prmf_; }
    const PrmfParams& prmf() const { return prmf_; }

    std::vector<ParamRef> parameters();
    std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;

    struct BatchGraph {
        Tape::Var loss;
        Tape::Var primary_logits;  // logits used for prediction
        Tape::Var alpha;           // only bound for the gated variant
        bool has_alpha = false;
    };

    // Builds the variant's forward + loss graph for a batch.
    BatchGraph build_batch(Tape& tape, const Tensor& image_rows, const Tensor& text_rows,
                           const std::vector<std::size_t>& labels, double lambda,
                           const ParamMap* override = nullptr) const;

    // Softmax scores of the variant's prediction logits.
    std::vector<std::vector<double>> predict_scores(const std::vector<EmbeddingRecord>& records) const;

    // Per-record confidence values; only the gated variant produces them.
    std::vector<double> predict_alphas(const std::vector<EmbeddingRecord>& records) const;

    void save(const std::string& path, const std::string& config_digest) const;
    static FusionClassifier load(const std::string& path);

private:
    PrmfParams prmf_;
    AblationFlags flags_;
    Tensor w_cat_;  // [d_t x 2 d_t] concat-fusion reduction
    Tensor b_cat_;  // [d_t]
};

struct TrainResult {
    std::vector<EpochRecord> log;
};

TrainResult train_classifier(FusionClassifier& model, const EmbeddingDataset& data,
                             const TrainConfig& tcfg, const CurriculumSchedule& schedule);

struct EvalResult {
    MetricsReport report;
    double mean_alpha_clean = 0.0;
    double mean_alpha_noisy = 0.0;
    bool has_alpha = false;
    // Accuracy split by the synthetic provenance flag.
    double acc_clean = 0.0;
    double acc_noisy = 0.0;
};

EvalResult evaluate_classifier(const FusionClassifier& model,
                               const std::vector<EmbeddingRecord>& records);

// End-to-end pipeline with the toy encoders in front of the fusion block;
// carries all five parameter groups for staged freeze/unfreeze training.
class ToyFusionPipeline {
public:
    ToyFusionPipeline(const ConvEncoderConfig& conv_cfg, const TextEncoderConfig& text_cfg,
                      std::size_t classes, std::uint64_t seed);

    std::vector<ParamRef> parameters();
    ParamMap param_map() const;

    struct Bound {
        ConvEncoderVars conv;
        TextEncoderVars text;
        PrmfVars prmf;
    };
    Bound bind(Tape& tape, const ParamMap* override = nullptr) const;

    // lambda-weighted loss of one sample through encoders + fusion + heads.
    Tape::Var sample_loss(Tape& tape, const Bound& bound, const ToySample& sample,
                          double lambda) const;

    std::size_t predict(const ToySample& sample) const;

    const ToyConvEncoder& visual() const { return visual_; }
    const ToyTextEncoder& text() const { return text_; }
    const PrmfParams& fusion() const { return prmf_; }

private:
    ToyConvEncoder visual_;
    ToyTextEncoder text_;
    PrmfParams prmf_;
};

TrainResult train_toy(ToyFusionPipeline& model, const std::vector<ToySample>& train,
                      const std::vector<ToySample>& val, const TrainConfig& tcfg,
                      const CurriculumSchedule& schedule);

// Central-difference verification of the whole pipeline (toy encoders,
// fusion block, heads) through the curriculum loss, run at verification
// dims so every parameter coordinate gets checked.
GradCheckReport verify_full_model_gradients(std::uint64_t seed = 42,
                                            const GradCheckOptions& opts = {});

}  // namespace nbf
