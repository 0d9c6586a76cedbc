// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/ablation.hpp"

#include <atomic>
#include <cstdio>
#include <sstream>
#include <thread>

#include "nbfusion/errors.hpp"
#include "nbfusion/model.hpp"

namespace nbf {

std::vector<std::string> ablation_row_names() {
    return {
        "w/o Texual Branch",
        "w/o Visual Branch",
        "w/o Fine-Tuning VLM",
        "w/o PRMF Block",
        "w/o Curriculum Learning",
        "w/o Noise Robust",
        "Full Model",
    };
}

AblationFlags ablation_flags_for(const std::string& row_name, const AblationFlags& base) {
    AblationFlags flags = base;
    if (row_name == "w/o Texual Branch") {
        flags.disable_text_branch = true;
    } else if (row_name == "w/o Visual Branch") {
        flags.disable_visual_branch = true;
    } else if (row_name == "w/o Fine-Tuning VLM") {
        // No real text generator exists at this scale; a weaker text source is
        // modeled by pre-corrupting every text embedding.
        flags.precorrupt_text_level = 0.3;
    } else if (row_name == "w/o PRMF Block") {
        flags.disable_prmf = true;
    } else if (row_name == "w/o Curriculum Learning") {
        flags.disable_curriculum = true;
    } else if (row_name == "w/o Noise Robust") {
        flags.disable_confidence = true;
    } else if (row_name != "Full Model") {
        throw ConfigError("ablation: unknown row '" + row_name + "'");
    }
    return flags;
}

namespace {

MetricsReport run_single(const RunConfig& base, const std::string& row, std::size_t seed_offset) {
    SynthConfig synth = base.synth;
    synth.seed = base.synth.seed + seed_offset;
    EmbeddingDataset data = EmbeddingDataset::from_synth(generate(synth));

    const AblationFlags flags = ablation_flags_for(row, base.ablation);
    if (flags.precorrupt_text_level > 0.0) {
        precorrupt_text(data, flags.precorrupt_text_level, synth.seed);
    }

    PrmfConfig cfg;
    cfg.d_i = synth.d_i;
    cfg.d_t = synth.d_t;
    cfg.classes = synth.classes;
    cfg.separate_image_head = base.separate_image_head;

    TrainConfig tcfg = base.train;
    tcfg.seed = base.train.seed + seed_offset;
    FusionClassifier model(cfg, flags, tcfg.seed);

    CurriculumSchedule schedule = base.resolved_schedule();
    train_classifier(model, data, tcfg, schedule);
    return evaluate_classifier(model, data.val).report;
}

}  // namespace

AblationResult run_ablation_suite(const RunConfig& base, std::size_t n_seeds, std::size_t jobs) {
    if (n_seeds < 1) throw ConfigError("ablation: at least one seed required");
    base.validate();
    const std::vector<std::string> rows = ablation_row_names();

    struct Task {
        std::size_t row;
        std::size_t seed_offset;
    };
    std::vector<Task> tasks;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t s = 0; s < n_seeds; ++s) tasks.push_back({r, s});
    }
    std::vector<MetricsReport> reports(tasks.size());
    std::vector<std::string> failures(tasks.size());

    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        while (true) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) break;
            try {
                reports[t] = run_single(base, rows[tasks[t].row], tasks[t].seed_offset);
            } catch (const std::exception& e) {
                failures[t] = e.what();
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (!failures[t].empty()) {
            throw Error("ablation: run '" + rows[tasks[t].row] + "' seed offset " +
                        std::to_string(tasks[t].seed_offset) + " failed: " + failures[t]);
        }
    }

    AblationResult result;
    result.seeds = n_seeds;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        MetricsReport mean;
        for (std::size_t s = 0; s < n_seeds; ++s) {
            const MetricsReport& rep = reports[r * n_seeds + s];
            mean.acc += rep.acc;
            mean.bacc += rep.bacc;
            mean.kappa += rep.kappa;
            mean.f1_weighted += rep.f1_weighted;
            mean.prec_weighted += rep.prec_weighted;
            mean.rec_weighted += rep.rec_weighted;
            mean.auroc += rep.auroc;
        }
        const double inv = 1.0 / static_cast<double>(n_seeds);
        mean.acc *= inv;
        mean.bacc *= inv;
        mean.kappa *= inv;
        mean.f1_weighted *= inv;
        mean.prec_weighted *= inv;
        mean.rec_weighted *= inv;
        mean.auroc *= inv;
        result.rows.push_back({rows[r], mean});
    }
    result.table_text = format_ablation_table(result);
    return result;
}

std::string format_ablation_table(const AblationResult& result) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-26s %8s %8s %8s %8s %8s %8s %8s\n", "Model", "Acc", "BAcc",
                  "Kappa", "F1", "Prec", "Rec", "AUROC");
    out << buf;
    for (const AblationRow& row : result.rows) {
        const MetricsReport& m = row.metrics;
        std::snprintf(buf, sizeof(buf), "%-26s %8.2f %8.2f %8.2f %8.2f %8.2f %8.2f %8.2f\n",
                      row.name.c_str(), 100.0 * m.acc, 100.0 * m.bacc, 100.0 * m.kappa,
                      100.0 * m.f1_weighted, 100.0 * m.prec_weighted, 100.0 * m.rec_weighted,
                      100.0 * m.auroc);
        out << buf;
    }
    return out.str();
}

}  // namespace nbf
