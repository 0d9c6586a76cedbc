// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "nbfusion/ablation.hpp"
#include "nbfusion/cli.hpp"
#include "nbfusion/curriculum.hpp"
#include "nbfusion/embedding_io.hpp"
#include "nbfusion/errors.hpp"
#include "nbfusion/grad_check.hpp"
#include "nbfusion/lora.hpp"
#include "nbfusion/metrics.hpp"
#include "nbfusion/model.hpp"
#include "nbfusion/prmf.hpp"
#include "nbfusion/synthdata.hpp"

namespace py = pybind11;
using namespace nbf;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<std::size_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[i] = static_cast<std::size_t>(arr.shape(i));
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> arr(shape);
    std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
    return arr;
}

py::dict report_to_dict(const MetricsReport& rep) {
    py::dict d;
    d["acc"] = rep.acc;
    d["bacc"] = rep.bacc;
    d["kappa"] = rep.kappa;
    d["f1"] = rep.f1_weighted;
    d["prec"] = rep.prec_weighted;
    d["rec"] = rep.rec_weighted;
    d["auroc"] = rep.auroc;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Confidence-gated multimodal fusion: numeric core and training toolkit";

    py::register_exception<Error>(m, "NbfError", PyExc_RuntimeError);

    // diffcore
    m.def(
        "affine",
        [](const py::array_t<double>& x, const py::array_t<double>& w, const py::array_t<double>& b) {
            Tape t;
            return array_from_tensor(t.value(
                t.affine(t.input(tensor_from_array(x)), t.input(tensor_from_array(w)),
                         t.input(tensor_from_array(b)))));
        },
        py::arg("x"), py::arg("w"), py::arg("b"), "W.x + b (row-wise for matrix x)");
    m.def("relu", [](const py::array_t<double>& x) {
        Tape t;
        return array_from_tensor(t.value(t.relu(t.input(tensor_from_array(x)))));
    });
    m.def("sigmoid", [](const py::array_t<double>& x) {
        Tape t;
        return array_from_tensor(t.value(t.sigmoid(t.input(tensor_from_array(x)))));
    });
    m.def(
        "softmax_cross_entropy",
        [](const py::array_t<double>& logits, std::size_t label) {
            Tape t;
            auto loss = t.softmax_cross_entropy(t.input(tensor_from_array(logits)), label);
            const double value = t.value(loss)[0];
            // Gradient wrt logits comes along for free.
            Tape t2;
            auto lv = t2.param("logits", tensor_from_array(logits));
            GradMap grads = t2.backward(t2.softmax_cross_entropy(lv, label));
            return py::make_tuple(value, array_from_tensor(grads.at("logits")));
        },
        py::arg("logits"), py::arg("label"), "Returns (loss, gradient wrt logits)");

    // lora
    m.def("lora_param_count", &lora_param_count, py::arg("d"), py::arg("k"), py::arg("r"));
    m.def(
        "lora_apply",
        [](const py::array_t<double>& w0, const py::array_t<double>& b, const py::array_t<double>& a,
           const py::array_t<double>& x) {
            LoraAdapter adapter;
            adapter.w0 = tensor_from_array(w0);
            adapter.b = tensor_from_array(b);
            adapter.a = tensor_from_array(a);
            adapter.rank = adapter.b.rank() == 2 ? adapter.b.dim(1) : 0;
            return array_from_tensor(lora_apply(adapter, tensor_from_array(x)));
        },
        py::arg("w0"), py::arg("b"), py::arg("a"), py::arg("x"));
    m.def(
        "merge_adapter",
        [](const py::array_t<double>& w0, const py::array_t<double>& b, const py::array_t<double>& a) {
            LoraAdapter adapter;
            adapter.w0 = tensor_from_array(w0);
            adapter.b = tensor_from_array(b);
            adapter.a = tensor_from_array(a);
            adapter.rank = adapter.b.rank() == 2 ? adapter.b.dim(1) : 0;
            return array_from_tensor(merge_adapter(adapter));
        },
        py::arg("w0"), py::arg("b"), py::arg("a"));
    m.def(
        "cross_modal_attention",
        [](const py::array_t<double>& visual, const py::array_t<double>& text, std::size_t rank,
           std::size_t heads, std::uint64_t seed) {
            Rng rng(seed);
            const Tensor vis = tensor_from_array(visual);
            CrossModalAttentionParams params =
                CrossModalAttentionParams::create(vis.dim(1), rank, heads, rng);
            const auto res = cross_modal_attention(params, vis, tensor_from_array(text));
            py::list attn;
            for (const Tensor& a : res.attn) attn.append(array_from_tensor(a));
            return py::make_tuple(array_from_tensor(res.output), attn);
        },
        py::arg("visual"), py::arg("text"), py::arg("rank") = 4, py::arg("heads") = 1,
        py::arg("seed") = 0, "Toy LoRA-adapted attention; returns (output, per-head weights)");

    // prmf
    m.def(
        "prmf_forward",
        [](const py::array_t<double>& image_feat, const py::array_t<double>& text_feat,
           std::uint64_t seed) {
            const Tensor i = tensor_from_array(image_feat);
            const Tensor t = tensor_from_array(text_feat);
            PrmfConfig cfg;
            cfg.d_i = i.dim(0);
            cfg.d_t = t.dim(0);
            Rng rng(seed);
            const PrmfParams params = PrmfParams::init(cfg, rng);
            const PrmfOutput out = forward_prmf(params, i, t);
            py::dict d;
            d["projected"] = array_from_tensor(out.projected);
            d["alpha"] = out.alpha;
            d["fused"] = array_from_tensor(out.fused);
            d["fused_logits"] = array_from_tensor(out.fused_logits);
            d["image_logits"] = array_from_tensor(out.image_logits);
            return d;
        },
        py::arg("image_feat"), py::arg("text_feat"), py::arg("seed") = 0,
        "Forward pass of a freshly initialized fusion block");
    m.def(
        "fuse",
        [](const py::array_t<double>& text_feat, const py::array_t<double>& projected, double alpha) {
            return array_from_tensor(fuse(tensor_from_array(text_feat), tensor_from_array(projected),
                                          alpha));
        },
        py::arg("text_feat"), py::arg("projected"), py::arg("alpha"));

    // curriculum
    m.def(
        "lambda_at",
        [](std::size_t epochs, std::size_t epoch) {
            return lambda_at(CurriculumSchedule::defaults(epochs), epoch);
        },
        py::arg("epochs"), py::arg("epoch"));
    m.def(
        "stage_for_epoch",
        [](std::size_t epochs, std::size_t epoch) {
            const FreezeMask mask = stage_for_epoch(CurriculumSchedule::defaults(epochs), epoch);
            py::dict d;
            d["visual_encoder"] = mask.visual_encoder;
            d["text_encoder"] = mask.text_encoder;
            d["projection"] = mask.projection;
            d["confidence"] = mask.confidence;
            d["classifier"] = mask.classifier;
            return d;
        },
        py::arg("epochs"), py::arg("epoch"));

    // metrics
    m.def(
        "compute_metrics",
        [](const py::array_t<std::int64_t>& cm_array) {
            if (cm_array.ndim() != 2 || cm_array.shape(0) != cm_array.shape(1)) {
                throw ValueError("confusion matrix must be square");
            }
            const std::size_t k = static_cast<std::size_t>(cm_array.shape(0));
            ConfusionMatrix cm(k);
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t j = 0; j < k; ++j) cm.at(i, j) = cm_array.at(i, j);
            }
            return report_to_dict(compute_metrics(cm));
        },
        py::arg("confusion_matrix"));
    m.def(
        "auroc",
        [](const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& labels) {
            return auroc(scores, labels);
        },
        py::arg("scores"), py::arg("labels"));

    // synthdata + io
    m.def(
        "corrupt_text",
        [](const std::vector<float>& text, double level, std::uint64_t seed) {
            Rng rng(seed);
            return corrupt_text(text, level, rng);
        },
        py::arg("text"), py::arg("noise_level"), py::arg("seed") = 0);
    m.def(
        "load_embeddings",
        [](const std::string& path) {
            const auto records = load_embeddings(path);
            py::list out;
            for (const auto& r : records) {
                py::dict d;
                d["label"] = static_cast<int>(r.label);
                d["noisy"] = r.noisy;
                d["image_vec"] = py::array_t<float>(static_cast<py::ssize_t>(r.image_vec.size()),
                                                    r.image_vec.data());
                d["text_vec"] = py::array_t<float>(static_cast<py::ssize_t>(r.text_vec.size()),
                                                   r.text_vec.data());
                out.append(std::move(d));
            }
            return out;
        },
        py::arg("path"));

    // verification + cli
    m.def(
        "grad_check_full_model",
        [](std::uint64_t seed, double eps, double tolerance) {
            GradCheckOptions opts;
            opts.eps = eps;
            opts.tolerance = tolerance;
            const GradCheckReport rep = verify_full_model_gradients(seed, opts);
            py::dict d;
            d["pass"] = rep.pass;
            d["max_rel_err"] = rep.max_rel_err;
            d["report"] = rep.to_string();
            return d;
        },
        py::arg("seed") = 42, py::arg("eps") = 1e-5, py::arg("tolerance") = 1e-4);
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Dispatch a CLI invocation; returns (exit_code, stdout, stderr)");
}
