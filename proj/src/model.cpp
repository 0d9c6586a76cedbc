// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/model.hpp"

#include <algorithm>
#include <cmath>

#include "nbfusion/checkpoint.hpp"
#include "nbfusion/errors.hpp"
#include "nbfusion/kernels.hpp"

namespace nbf {

namespace {

constexpr std::size_t kPredictChunk = 256;

Tensor gather_rows(const std::vector<EmbeddingRecord>& records, const std::vector<std::size_t>& idx,
                   std::size_t begin, std::size_t end, bool image, std::size_t dim) {
    Tensor rows({end - begin, dim});
    for (std::size_t r = begin; r < end; ++r) {
        const EmbeddingRecord& rec = records[idx[r]];
        const std::vector<float>& src = image ? rec.image_vec : rec.text_vec;
        double* dst = rows.data() + (r - begin) * dim;
        for (std::size_t j = 0; j < dim; ++j) dst[j] = static_cast<double>(src[j]);
    }
    return rows;
}

}  // namespace

EmbeddingDataset EmbeddingDataset::from_synth(const SynthDataset& ds) {
    return from_records(ds.train, ds.val, ds.config.d_i, ds.config.d_t, ds.config.classes);
}

EmbeddingDataset EmbeddingDataset::from_records(std::vector<EmbeddingRecord> train,
                                                std::vector<EmbeddingRecord> val, std::size_t d_i,
                                                std::size_t d_t, std::size_t classes) {
    EmbeddingDataset data;
    data.train = std::move(train);
    data.val = std::move(val);
    data.d_i = d_i;
    data.d_t = d_t;
    data.classes = classes;
    data.validate();
    return data;
}

void EmbeddingDataset::validate() const {
    if (train.empty()) throw ConfigError("dataset: empty training split");
    for (const auto* split : {&train, &val}) {
        for (const EmbeddingRecord& rec : *split) {
            if (rec.image_vec.size() != d_i || rec.text_vec.size() != d_t) {
                throw ShapeError("dataset: record dims do not match " + std::to_string(d_i) + "/" +
                                 std::to_string(d_t));
            }
            if (rec.label >= classes) {
                throw IndexError("dataset: label " + std::to_string(rec.label) + " out of range");
            }
        }
    }
}

void precorrupt_text(EmbeddingDataset& data, double level, std::uint64_t seed) {
    Rng rng(mix64(seed ^ 0xc0522u));
    for (auto* split : {&data.train, &data.val}) {
        for (EmbeddingRecord& rec : *split) {
            rec.text_vec = corrupt_text(rec.text_vec, level, rng);
        }
    }
}

FusionClassifier::FusionClassifier(const PrmfConfig& cfg, const AblationFlags& flags,
                                   std::uint64_t seed)
    : flags_(flags) {
    flags_.validate();
    Rng rng(mix64(seed ^ 0xf051011u));
    prmf_ = PrmfParams::init(cfg, rng);
    if (flags_.disable_prmf) {
        const double std = std::sqrt(1.0 / static_cast<double>(2 * cfg.d_t));
        w_cat_ = Tensor({cfg.d_t, 2 * cfg.d_t});
        for (double& v : w_cat_.vec()) v = rng.normal(0.0, std);
        b_cat_ = Tensor({cfg.d_t});
    }
}

std::vector<ParamRef> FusionClassifier::parameters() {
    std::vector<ParamRef> out;
    const bool text_only = flags_.disable_visual_branch;
    const bool image_only = flags_.disable_text_branch;
    const bool gated = !text_only && !image_only && !flags_.disable_prmf && !flags_.disable_confidence;
    if (!text_only) {
        out.push_back({"prmf.proj.w", ParamGroup::projection, &prmf_.w_proj});
        out.push_back({"prmf.proj.b", ParamGroup::projection, &prmf_.b_proj});
    }
    if (gated) {
        out.push_back({"prmf.conf.w", ParamGroup::confidence, &prmf_.w_conf});
        out.push_back({"prmf.conf.b", ParamGroup::confidence, &prmf_.b_conf});
    }
    if (flags_.disable_prmf && !text_only && !image_only) {
        out.push_back({"fusion.cat.w", ParamGroup::projection, &w_cat_});
        out.push_back({"fusion.cat.b", ParamGroup::projection, &b_cat_});
    }
    out.push_back({"prmf.cls.w", ParamGroup::classifier, &prmf_.w_cls});
    out.push_back({"prmf.cls.b", ParamGroup::classifier, &prmf_.b_cls});
    if (prmf_.cfg.separate_image_head && !text_only) {
        out.push_back({"prmf.img_cls.w", ParamGroup::classifier, &prmf_.w_img_cls});
        out.push_back({"prmf.img_cls.b", ParamGroup::classifier, &prmf_.b_img_cls});
    }
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> FusionClassifier::named_tensors() const {
    auto* self = const_cast<FusionClassifier*>(this);
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (const ParamRef& p : self->parameters()) out.emplace_back(p.name, p.tensor);
    return out;
}

FusionClassifier::BatchGraph FusionClassifier::build_batch(Tape& tape, const Tensor& image_rows,
                                                           const Tensor& text_rows,
                                                           const std::vector<std::size_t>& labels,
                                                           double lambda,
                                                           const ParamMap* override) const {
    const auto pick = [&](const std::string& name, const Tensor& def) {
        const bool hit = override && override->count(name) > 0;
        return tape.param(name, hit ? override->at(name) : def);
    };
    BatchGraph g;
    Tape::Var img = tape.input(image_rows);
    Tape::Var txt = tape.input(text_rows);

    Tape::Var cls_w = pick("prmf.cls.w", prmf_.w_cls);
    Tape::Var cls_b = pick("prmf.cls.b", prmf_.b_cls);

    if (flags_.disable_visual_branch) {
        g.primary_logits = tape.affine(txt, cls_w, cls_b);
        g.loss = tape.softmax_cross_entropy_mean(g.primary_logits, labels);
        return g;
    }

    Tape::Var proj_w = pick("prmf.proj.w", prmf_.w_proj);
    Tape::Var proj_b = pick("prmf.proj.b", prmf_.b_proj);
    Tape::Var projected = tape.affine(img, proj_w, proj_b);

    Tape::Var image_logits;
    if (prmf_.cfg.separate_image_head) {
        Tape::Var img_w = pick("prmf.img_cls.w", prmf_.w_img_cls);
        Tape::Var img_b = pick("prmf.img_cls.b", prmf_.b_img_cls);
        image_logits = tape.affine(projected, img_w, img_b);
    } else {
        image_logits = tape.affine(projected, cls_w, cls_b);
    }

    if (flags_.disable_text_branch) {
        g.primary_logits = image_logits;
        g.loss = tape.softmax_cross_entropy_mean(image_logits, labels);
        return g;
    }

    Tape::Var fused;
    if (flags_.disable_prmf) {
        Tape::Var cat_w = pick("fusion.cat.w", w_cat_);
        Tape::Var cat_b = pick("fusion.cat.b", b_cat_);
        fused = tape.affine(tape.concat_cols(projected, txt), cat_w, cat_b);
    } else if (flags_.disable_confidence) {
        Tape::Var half_text = tape.row_scale(txt, tape.input(Tensor::full({image_rows.dim(0)}, 0.5)));
        Tape::Var half_img = tape.row_scale(projected, tape.input(Tensor::full({image_rows.dim(0)}, 0.5)));
        fused = tape.add(half_text, half_img);
    } else {
        Tape::Var conf_w = pick("prmf.conf.w", prmf_.w_conf);
        Tape::Var conf_b = pick("prmf.conf.b", prmf_.b_conf);
        Tape::Var logit = tape.affine(tape.concat_cols(img, txt), conf_w, conf_b);
        g.alpha = tape.sigmoid(tape.reshape(logit, {image_rows.dim(0)}));
        g.has_alpha = true;
        Tape::Var gated_text = tape.row_scale(txt, g.alpha);
        Tape::Var gated_img = tape.row_scale(projected, tape.one_minus(g.alpha));
        fused = tape.add(gated_text, gated_img);
    }
    g.primary_logits = tape.affine(fused, cls_w, cls_b);
    g.loss = total_loss(tape, g.primary_logits, image_logits, labels, lambda);
    return g;
}

std::vector<std::vector<double>> FusionClassifier::predict_scores(
    const std::vector<EmbeddingRecord>& records) const {
    std::vector<std::vector<double>> scores;
    scores.reserve(records.size());
    std::vector<std::size_t> idx(records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t k = prmf_.cfg.classes;
    for (std::size_t begin = 0; begin < records.size(); begin += kPredictChunk) {
        const std::size_t end = std::min(records.size(), begin + kPredictChunk);
        Tensor img = gather_rows(records, idx, begin, end, true, prmf_.cfg.d_i);
        Tensor txt = gather_rows(records, idx, begin, end, false, prmf_.cfg.d_t);
        const std::vector<std::size_t> dummy(end - begin, 0);
        Tape tape;
        BatchGraph g = build_batch(tape, img, txt, dummy, 1.0);
        const Tensor& logits = tape.value(g.primary_logits);
        for (std::size_t r = 0; r < end - begin; ++r) {
            std::vector<double> row(logits.data() + r * k, logits.data() + (r + 1) * k);
            kernels::softmax_inplace(row.data(), k);
            scores.push_back(std::move(row));
        }
    }
    return scores;
}

std::vector<double> FusionClassifier::predict_alphas(const std::vector<EmbeddingRecord>& records) const {
    std::vector<double> alphas;
    alphas.reserve(records.size());
    std::vector<std::size_t> idx(records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t begin = 0; begin < records.size(); begin += kPredictChunk) {
        const std::size_t end = std::min(records.size(), begin + kPredictChunk);
        Tensor img = gather_rows(records, idx, begin, end, true, prmf_.cfg.d_i);
        Tensor txt = gather_rows(records, idx, begin, end, false, prmf_.cfg.d_t);
        const std::vector<std::size_t> dummy(end - begin, 0);
        Tape tape;
        BatchGraph g = build_batch(tape, img, txt, dummy, 1.0);
        if (!g.has_alpha) throw Error("predict_alphas: this variant has no confidence gate");
        const Tensor& a = tape.value(g.alpha);
        alphas.insert(alphas.end(), a.data(), a.data() + a.size());
    }
    return alphas;
}

void FusionClassifier::save(const std::string& path, const std::string& config_digest) const {
    MetaMap info;
    info["kind"] = "fusion_classifier";
    info["d_i"] = std::to_string(prmf_.cfg.d_i);
    info["d_t"] = std::to_string(prmf_.cfg.d_t);
    info["classes"] = std::to_string(prmf_.cfg.classes);
    info["separate_image_head"] = prmf_.cfg.separate_image_head ? "1" : "0";
    info["disable_text_branch"] = flags_.disable_text_branch ? "1" : "0";
    info["disable_visual_branch"] = flags_.disable_visual_branch ? "1" : "0";
    info["disable_prmf"] = flags_.disable_prmf ? "1" : "0";
    info["disable_curriculum"] = flags_.disable_curriculum ? "1" : "0";
    info["disable_confidence"] = flags_.disable_confidence ? "1" : "0";
    info["precorrupt_text_level"] = std::to_string(flags_.precorrupt_text_level);
    save_checkpoint(path, named_tensors(), info, config_digest);
}

FusionClassifier FusionClassifier::load(const std::string& path) {
    const LoadedCheckpoint ck = load_checkpoint(path);
    const auto need = [&](const std::string& key) {
        const auto it = ck.info.find(key);
        if (it == ck.info.end()) throw FormatError("nbck: missing info key '" + key + "'");
        return it->second;
    };
    if (need("kind") != "fusion_classifier") throw FormatError("nbck: unexpected model kind");
    PrmfConfig cfg;
    cfg.d_i = std::stoul(need("d_i"));
    cfg.d_t = std::stoul(need("d_t"));
    cfg.classes = std::stoul(need("classes"));
    cfg.separate_image_head = need("separate_image_head") == "1";
    AblationFlags flags;
    flags.disable_text_branch = need("disable_text_branch") == "1";
    flags.disable_visual_branch = need("disable_visual_branch") == "1";
    flags.disable_prmf = need("disable_prmf") == "1";
    flags.disable_curriculum = need("disable_curriculum") == "1";
    flags.disable_confidence = need("disable_confidence") == "1";
    flags.precorrupt_text_level = std::stod(need("precorrupt_text_level"));

    FusionClassifier model(cfg, flags, 0);
    std::vector<ParamRef> params = model.parameters();
    if (params.size() != ck.tensors.size()) {
        throw ConfigError("nbck: checkpoint has " + std::to_string(ck.tensors.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
    }
    for (ParamRef& p : params) {
        const Tensor* stored = ck.find(p.name);
        if (!stored) throw ConfigError("nbck: checkpoint lacks tensor '" + p.name + "'");
        if (!stored->same_shape(*p.tensor)) {
            throw ConfigError("nbck: shape mismatch for tensor '" + p.name + "'");
        }
        *p.tensor = *stored;
    }
    return model;
}

namespace {

double accuracy_from_scores(const std::vector<std::vector<double>>& scores,
                            const std::vector<EmbeddingRecord>& records) {
    if (records.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& row = scores[i];
        const std::size_t pred =
            static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (pred == records[i].label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

}  // namespace

TrainResult train_classifier(FusionClassifier& model, const EmbeddingDataset& data,
                             const TrainConfig& tcfg, const CurriculumSchedule& schedule) {
    tcfg.validate();
    schedule.validate();
    data.validate();
    if (schedule.total_epochs != tcfg.epochs) {
        throw ConfigError("train: schedule horizon does not match epoch count");
    }
    if (data.d_i != model.config().d_i || data.d_t != model.config().d_t) {
        throw ConfigError("train: dataset dims do not match model dims");
    }

    const bool curricular = !model.flags().disable_curriculum;
    Adam opt(tcfg.adam());
    std::vector<ParamRef> params = model.parameters();
    Rng shuffle_rng = Rng(tcfg.seed).spawn(0x5f1e);
    const std::size_t n = data.train.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;

    TrainResult result;
    for (std::size_t e = 0; e < tcfg.epochs; ++e) {
        const double lambda = curricular ? lambda_at(schedule, e) : 1.0;
        const FreezeMask mask = curricular ? stage_for_epoch(schedule, e) : FreezeMask{};
        shuffle_rng.shuffle(idx);
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < n; begin += tcfg.batch_size) {
            const std::size_t end = std::min(n, begin + tcfg.batch_size);
            Tensor img = gather_rows(data.train, idx, begin, end, true, data.d_i);
            Tensor txt = gather_rows(data.train, idx, begin, end, false, data.d_t);
            std::vector<std::size_t> labels(end - begin);
            for (std::size_t r = begin; r < end; ++r) labels[r - begin] = data.train[idx[r]].label;
            Tape tape;
            const auto g = model.build_batch(tape, img, txt, labels, lambda);
            const double loss = tape.value(g.loss)[0];
            if (!std::isfinite(loss)) {
                throw EvalError("train: non-finite loss at epoch " + std::to_string(e) + ", batch " +
                                std::to_string(begin / tcfg.batch_size));
            }
            loss_sum += loss * static_cast<double>(end - begin);
            const GradMap grads = tape.backward(g.loss);
            opt.step(params, grads, mask);
        }
        EpochRecord rec;
        rec.epoch = e;
        rec.lambda = lambda;
        rec.phase = curricular ? phase_for_epoch(schedule, e) : 0;
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.val_acc = data.val.empty()
                          ? 0.0
                          : accuracy_from_scores(model.predict_scores(data.val), data.val);
        result.log.push_back(rec);
    }
    return result;
}

EvalResult evaluate_classifier(const FusionClassifier& model,
                               const std::vector<EmbeddingRecord>& records) {
    if (records.empty()) throw ConfigError("evaluate: empty record list");
    EvalResult out;
    const auto scores = model.predict_scores(records);
    std::vector<std::size_t> labels(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) labels[i] = records[i].label;
    out.report = evaluate_predictions(scores, labels, model.config().classes);

    std::size_t clean_hits = 0, noisy_hits = 0, clean_total = 0, noisy_total = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& row = scores[i];
        const bool hit = static_cast<std::size_t>(
                             std::max_element(row.begin(), row.end()) - row.begin()) == labels[i];
        if (records[i].noisy) {
            ++noisy_total;
            noisy_hits += hit ? 1 : 0;
        } else {
            ++clean_total;
            clean_hits += hit ? 1 : 0;
        }
    }
    out.acc_clean = clean_total ? static_cast<double>(clean_hits) / clean_total : 0.0;
    out.acc_noisy = noisy_total ? static_cast<double>(noisy_hits) / noisy_total : 0.0;

    const AblationFlags& f = model.flags();
    const bool gated = !f.disable_text_branch && !f.disable_visual_branch && !f.disable_prmf &&
                       !f.disable_confidence;
    if (gated) {
        out.has_alpha = true;
        const auto alphas = model.predict_alphas(records);
        double clean_sum = 0.0, noisy_sum = 0.0;
        std::size_t clean_n = 0, noisy_n = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].noisy) {
                noisy_sum += alphas[i];
                ++noisy_n;
            } else {
                clean_sum += alphas[i];
                ++clean_n;
            }
        }
        out.mean_alpha_clean = clean_n ? clean_sum / static_cast<double>(clean_n) : std::nan("");
        out.mean_alpha_noisy = noisy_n ? noisy_sum / static_cast<double>(noisy_n) : std::nan("");
    }
    return out;
}

ToyFusionPipeline::ToyFusionPipeline(const ConvEncoderConfig& conv_cfg,
                                     const TextEncoderConfig& text_cfg, std::size_t classes,
                                     std::uint64_t seed) {
    Rng root(mix64(seed ^ 0x70f051u));
    Rng conv_rng = root.spawn(1);
    Rng text_rng = root.spawn(2);
    Rng prmf_rng = root.spawn(3);
    visual_ = ToyConvEncoder::init(conv_cfg, conv_rng);
    text_ = ToyTextEncoder::init(text_cfg, text_rng);
    PrmfConfig cfg;
    cfg.d_i = conv_cfg.out_dim;
    cfg.d_t = text_cfg.d_t;
    cfg.classes = classes;
    prmf_ = PrmfParams::init(cfg, prmf_rng);
}

std::vector<ParamRef> ToyFusionPipeline::parameters() {
    std::vector<ParamRef> out;
    for (std::size_t s = 0; s < visual_.kernels.size(); ++s) {
        out.push_back({"visual.conv" + std::to_string(s) + ".kernel", ParamGroup::visual_encoder,
                       &visual_.kernels[s]});
        out.push_back({"visual.conv" + std::to_string(s) + ".bias", ParamGroup::visual_encoder,
                       &visual_.biases[s]});
    }
    out.push_back({"visual.head.w", ParamGroup::visual_encoder, &visual_.head_w});
    out.push_back({"visual.head.b", ParamGroup::visual_encoder, &visual_.head_b});
    out.push_back({"text.token_embed", ParamGroup::text_encoder, &text_.token_embed});
    out.push_back({"text.pos_embed", ParamGroup::text_encoder, &text_.pos_embed});
    out.push_back({"text.seg_embed", ParamGroup::text_encoder, &text_.seg_embed});
    out.push_back({"text.wq", ParamGroup::text_encoder, &text_.wq});
    out.push_back({"text.wk", ParamGroup::text_encoder, &text_.wk});
    out.push_back({"text.wv", ParamGroup::text_encoder, &text_.wv});
    out.push_back({"text.out.w", ParamGroup::text_encoder, &text_.out_w});
    out.push_back({"text.out.b", ParamGroup::text_encoder, &text_.out_b});
    out.push_back({"prmf.proj.w", ParamGroup::projection, &prmf_.w_proj});
    out.push_back({"prmf.proj.b", ParamGroup::projection, &prmf_.b_proj});
    out.push_back({"prmf.conf.w", ParamGroup::confidence, &prmf_.w_conf});
    out.push_back({"prmf.conf.b", ParamGroup::confidence, &prmf_.b_conf});
    out.push_back({"prmf.cls.w", ParamGroup::classifier, &prmf_.w_cls});
    out.push_back({"prmf.cls.b", ParamGroup::classifier, &prmf_.b_cls});
    return out;
}

ParamMap ToyFusionPipeline::param_map() const {
    auto* self = const_cast<ToyFusionPipeline*>(this);
    ParamMap map;
    for (const ParamRef& p : self->parameters()) map[p.name] = *p.tensor;
    return map;
}

ToyFusionPipeline::Bound ToyFusionPipeline::bind(Tape& tape, const ParamMap* override) const {
    Bound bound;
    bound.conv = bind_conv_encoder(tape, visual_, "visual", override);
    bound.text = bind_text_encoder(tape, text_, "text", override);
    bound.prmf = bind_prmf(tape, prmf_, "prmf", override);
    return bound;
}

Tape::Var ToyFusionPipeline::sample_loss(Tape& tape, const Bound& bound, const ToySample& sample,
                                         double lambda) const {
    Tape::Var image_feat = conv_encode(tape, bound.conv, tape.input(sample.image));
    Tape::Var text_feat = text_encode(tape, text_.cfg, bound.text, sample.tokens);
    Tape::Var projected = tape.affine(image_feat, bound.prmf.w_proj, bound.prmf.b_proj);
    Tape::Var conf_in = tape.concat_cols(image_feat, text_feat);
    Tape::Var alpha = tape.sigmoid(tape.affine(conf_in, bound.prmf.w_conf, bound.prmf.b_conf));
    Tape::Var fused = tape.add(tape.row_scale(text_feat, alpha),
                               tape.row_scale(projected, tape.one_minus(alpha)));
    Tape::Var fused_logits = tape.affine(fused, bound.prmf.w_cls, bound.prmf.b_cls);
    Tape::Var image_logits = tape.affine(projected, bound.prmf.w_cls, bound.prmf.b_cls);
    return total_loss(tape, fused_logits, image_logits, sample.label, lambda);
}

std::size_t ToyFusionPipeline::predict(const ToySample& sample) const {
    Tape tape;
    Bound bound = bind(tape);
    Tape::Var image_feat = conv_encode(tape, bound.conv, tape.input(sample.image));
    Tape::Var text_feat = text_encode(tape, text_.cfg, bound.text, sample.tokens);
    Tape::Var projected = tape.affine(image_feat, bound.prmf.w_proj, bound.prmf.b_proj);
    Tape::Var conf_in = tape.concat_cols(image_feat, text_feat);
    Tape::Var alpha = tape.sigmoid(tape.affine(conf_in, bound.prmf.w_conf, bound.prmf.b_conf));
    Tape::Var fused = tape.add(tape.row_scale(text_feat, alpha),
                               tape.row_scale(projected, tape.one_minus(alpha)));
    const Tensor& logits = tape.value(tape.affine(fused, bound.prmf.w_cls, bound.prmf.b_cls));
    return static_cast<std::size_t>(
        std::max_element(logits.data(), logits.data() + logits.size()) - logits.data());
}

TrainResult train_toy(ToyFusionPipeline& model, const std::vector<ToySample>& train,
                      const std::vector<ToySample>& val, const TrainConfig& tcfg,
                      const CurriculumSchedule& schedule) {
    tcfg.validate();
    schedule.validate();
    if (train.empty()) throw ConfigError("train: empty training set");
    if (schedule.total_epochs != tcfg.epochs) {
        throw ConfigError("train: schedule horizon does not match epoch count");
    }

    Adam opt(tcfg.adam());
    std::vector<ParamRef> params = model.parameters();
    Rng shuffle_rng = Rng(tcfg.seed).spawn(0x5f1e);
    std::vector<std::size_t> idx(train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    TrainResult result;
    for (std::size_t e = 0; e < tcfg.epochs; ++e) {
        const double lambda = lambda_at(schedule, e);
        const FreezeMask mask = stage_for_epoch(schedule, e);
        shuffle_rng.shuffle(idx);
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < idx.size(); begin += tcfg.batch_size) {
            const std::size_t end = std::min(idx.size(), begin + tcfg.batch_size);
            Tape tape;
            ToyFusionPipeline::Bound bound = model.bind(tape);
            Tape::Var batch_loss;
            for (std::size_t r = begin; r < end; ++r) {
                Tape::Var li = model.sample_loss(tape, bound, train[idx[r]], lambda);
                batch_loss = r == begin ? li : tape.add(batch_loss, li);
            }
            batch_loss = tape.scale(batch_loss, 1.0 / static_cast<double>(end - begin));
            const double loss = tape.value(batch_loss)[0];
            if (!std::isfinite(loss)) {
                throw EvalError("train: non-finite loss at epoch " + std::to_string(e) + ", batch " +
                                std::to_string(begin / tcfg.batch_size));
            }
            loss_sum += loss * static_cast<double>(end - begin);
            const GradMap grads = tape.backward(batch_loss);
            opt.step(params, grads, mask);
        }
        EpochRecord rec;
        rec.epoch = e;
        rec.lambda = lambda;
        rec.phase = phase_for_epoch(schedule, e);
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        if (!val.empty()) {
            std::size_t hits = 0;
            for (const ToySample& s : val) {
                if (model.predict(s) == s.label) ++hits;
            }
            rec.val_acc = static_cast<double>(hits) / static_cast<double>(val.size());
        }
        result.log.push_back(rec);
    }
    return result;
}

GradCheckReport verify_full_model_gradients(std::uint64_t seed, const GradCheckOptions& opts) {
    ConvEncoderConfig conv_cfg;
    conv_cfg.in_channels = 1;
    conv_cfg.height = 8;
    conv_cfg.width = 8;
    conv_cfg.channels = {4, 6};
    conv_cfg.out_dim = 10;
    TextEncoderConfig text_cfg;
    text_cfg.vocab = 12;
    text_cfg.d_t = 12;
    text_cfg.max_len = 10;
    const std::size_t classes = 3;

    ToyFusionPipeline model(conv_cfg, text_cfg, classes, seed);
    const std::vector<ToySample> samples =
        generate_toy_samples(1, classes, conv_cfg, text_cfg, mix64(seed ^ 0xda7a));

    const double lambda = 0.6;  // both loss terms active
    const TapeFn fn = [&](Tape& tape, const ParamMap& params) {
        ToyFusionPipeline::Bound bound = model.bind(tape, &params);
        Tape::Var loss;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            Tape::Var li = model.sample_loss(tape, bound, samples[i], lambda);
            loss = i == 0 ? li : tape.add(loss, li);
        }
        return tape.scale(loss, 1.0 / static_cast<double>(samples.size()));
    };
    return grad_check(fn, model.param_map(), opts);
}

}  // namespace nbf
