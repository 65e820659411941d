// cada: command-line front end for dataset generation, training, evaluation
// and parameter sweeps. One run per process; sweeps execute their settings
// sequentially, each retrained from the same seed so rows are independent.
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cada/checkpoint.hpp"
#include "cada/config.hpp"
#include "cada/data.hpp"
#include "cada/errors.hpp"
#include "cada/model.hpp"
#include "cada/retrieval.hpp"
#include "cada/trainer.hpp"

namespace fs = std::filesystem;
using namespace cada;

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string data_manifest;
    std::string out_dir = "runs/run";
    int64_t seed = -1;  // -1 = keep the config's seed
    bool no_atp = false, no_ara = false, no_ndf = false;

    void attach(CLI::App* cmd, bool with_ablation) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option("--override", overrides, "dotted.key=value override (repeatable)");
        cmd->add_option("--data", data_manifest, "dataset manifest.jsonl")->required();
        cmd->add_option("--out", out_dir, "run output directory");
        cmd->add_option("--seed", seed, "training seed (overrides config)");
        if (with_ablation) {
            cmd->add_flag("--no-atp", no_atp, "drop the token-prediction loss");
            cmd->add_flag("--no-ara", no_ara, "drop the attribute-reconstruction loss");
            cmd->add_flag("--no-ndf", no_ndf, "drop the contrastive loss");
        }
    }
};

RunConfig effective_config(const CommonFlags& flags, const Dataset& dataset) {
    RunConfig cfg = flags.config_path.empty() ? RunConfig{} : load_config_file(flags.config_path);
    for (const auto& kv : flags.overrides) apply_override(cfg, kv);
    if (flags.seed >= 0) cfg.train.seed = uint64_t(flags.seed);
    if (cfg.model.vocab_size == 0) cfg.model.vocab_size = dataset.vocab.size();
    cfg.model.image_h = dataset.image_h;
    cfg.model.image_w = dataset.image_w;
    cfg.model.image_c = dataset.image_c;
    cfg.loss.use_atp = cfg.loss.use_atp && !flags.no_atp;
    cfg.loss.use_ara = cfg.loss.use_ara && !flags.no_ara;
    cfg.loss.use_ndf = cfg.loss.use_ndf && !flags.no_ndf;
    cfg.validate();
    return cfg;
}

// Everything needed to reproduce the run bit-exactly.
void write_run_provenance(const fs::path& dir, const RunConfig& cfg, const Dataset& dataset) {
    fs::create_directories(dir);
    std::ofstream os(dir / "effective_config.txt", std::ios::binary);
    os << cfg.to_text();
    os << "run.seed=" << cfg.train.seed << "\n";
    os << "run.dataset_hash=" << dataset.manifest_hash() << "\n";
    os << "run.dataset_root=" << dataset.root << "\n";
}

EvalSummary evaluate(const Model& model, const Dataset& dataset, const RunConfig& cfg,
                     const std::string& protocol, int eta, const std::string& report_path) {
    const auto test_records = dataset.split_records("test");
    const auto start = std::chrono::steady_clock::now();
    const GalleryIndex gallery = build_gallery(model, dataset, test_records);
    const QuerySet queries = make_query_set(dataset, test_records, cfg.model.max_len);
    RankingResult result = global_rank(model, queries, gallery);
    if (protocol == "local") local_rerank(result, model, queries, gallery, eta);

    EvalSummary summary;
    summary.rank1 = rank_k(result, 1);
    summary.rank5 = rank_k(result, 5);
    summary.rank10 = rank_k(result, 10);
    summary.map = mean_ap(result);
    summary.decoder_calls = result.decoder_calls;
    summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_eval_report(report_path, result, summary);
    return summary;
}

// Minimal line plot so sweep results are viewable without extra tooling.
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::vector<double>& xs,
                    const std::vector<double>& ys) {
    const double w = 640, h = 420, ml = 70, mr = 30, mt = 50, mb = 60;
    double x_lo = xs.front(), x_hi = xs.front(), y_lo = ys.front(), y_hi = ys.front();
    for (double x : xs) { x_lo = std::min(x_lo, x); x_hi = std::max(x_hi, x); }
    for (double y : ys) { y_lo = std::min(y_lo, y); y_hi = std::max(y_hi, y); }
    if (x_hi == x_lo) x_hi = x_lo + 1;
    if (y_hi == y_lo) { y_lo -= 0.05; y_hi += 0.05; }
    auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - y_lo) / (y_hi - y_lo) * (h - mt - mb); };

    std::ofstream os(path, std::ios::binary);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << w / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
       << title << "</text>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
       << h - mb << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
       << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << w / 2 << "\" y=\"" << h - 16 << "\" text-anchor=\"middle\" "
       << "font-size=\"13\">" << x_label << "</text>\n"
       << "<text x=\"18\" y=\"" << h / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
       << "transform=\"rotate(-90 18 " << h / 2 << ")\">Rank-1</text>\n";
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < xs.size(); ++i) os << px(xs[i]) << "," << py(ys[i]) << " ";
    os << "\"/>\n";
    for (size_t i = 0; i < xs.size(); ++i) {
        os << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i])
           << "\" r=\"3\" fill=\"#1f77b4\"/>\n"
           << "<text x=\"" << px(xs[i]) << "\" y=\"" << h - mb + 18
           << "\" text-anchor=\"middle\" font-size=\"11\">" << xs[i] << "</text>\n";
    }
    os << "</svg>\n";
}

int cmd_gen_data(int n_ids, int images_per_id, int captions_per_image, double train_frac,
                 uint64_t seed, int image_size, const std::string& out_dir) {
    GenConfig g;
    g.n_ids = n_ids;
    g.images_per_id = images_per_id;
    g.captions_per_image = captions_per_image;
    g.train_frac = train_frac;
    g.seed = seed;
    g.image_h = image_size;
    g.image_w = image_size;
    const std::string manifest = generate_dataset(g, out_dir);
    const Dataset ds = load_dataset(manifest);
    const auto train = ds.split_records("train"), test = ds.split_records("test");
    std::set<int> train_ids, test_ids;
    for (const auto& r : train) train_ids.insert(r.identity_id);
    for (const auto& r : test) test_ids.insert(r.identity_id);
    std::cout << "manifest: " << manifest << "\n"
              << "identities: " << n_ids << " (" << train_ids.size() << " train / "
              << test_ids.size() << " test)\n"
              << "records: " << ds.records.size() << " (" << train.size() << " train / "
              << test.size() << " test)\n"
              << "vocab: " << ds.vocab.size() << " tokens\n"
              << "manifest_hash: " << ds.manifest_hash() << "\n";
    return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& resume_path) {
    const Dataset ds = load_dataset(flags.data_manifest);
    const RunConfig cfg = effective_config(flags, ds);
    write_run_provenance(flags.out_dir, cfg, ds);
    Model model(cfg.model, cfg.train.seed);
    const TrainResult res =
        resume_path.empty() ? train(model, ds, cfg, flags.out_dir)
                            : resume(model, ds, cfg, resume_path, flags.out_dir);
    std::cout << "steps: " << res.final_step << "\n"
              << "final_loss: " << (res.rows.empty() ? 0.0f : res.rows.back().total) << "\n"
              << "checkpoint: " << res.checkpoint_path << "\n"
              << "log: " << res.log_path << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint,
             const std::string& protocol, int eta) {
    const Dataset ds = load_dataset(flags.data_manifest);
    const RunConfig cfg = effective_config(flags, ds);
    fs::create_directories(flags.out_dir);
    Model model(cfg.model, cfg.train.seed);
    load_checkpoint(checkpoint, model.params(), cfg.hash());
    const std::string report = (fs::path(flags.out_dir) / "eval_report.csv").string();
    const EvalSummary s = evaluate(model, ds, cfg, protocol, eta, report);
    std::cout << "protocol: " << protocol << (protocol == "local" ? " eta=" + std::to_string(eta) : "")
              << "\nrank1: " << s.rank1 << "\nrank5: " << s.rank5 << "\nrank10: " << s.rank10
              << "\nmap: " << s.map << "\ndecoder_calls: " << s.decoder_calls
              << "\nreport: " << report << "\n";
    return 0;
}

struct SweepRow {
    std::string setting;
    double x = 0;
    EvalSummary summary;
};

void write_sweep_outputs(const fs::path& dir, const std::string& kind,
                         const std::string& x_label, const std::vector<SweepRow>& rows) {
    std::ofstream csv(dir / (kind + "_sweep.csv"), std::ios::binary);
    csv << "setting,rank1,rank5,rank10,map,decoder_calls\n";
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
        csv << r.setting << "," << r.summary.rank1 << "," << r.summary.rank5 << ","
            << r.summary.rank10 << "," << r.summary.map << "," << r.summary.decoder_calls
            << "\n";
        xs.push_back(r.x);
        ys.push_back(r.summary.rank1);
        std::cout << kind << "=" << r.setting << " rank1=" << r.summary.rank1
                  << " decoder_calls=" << r.summary.decoder_calls << "\n";
    }
    write_svg_plot((dir / (kind + "_sweep.svg")).string(), "Rank-1 vs " + x_label, x_label,
                   xs, ys);
}

int cmd_sweep(const CommonFlags& flags, const std::string& kind) {
    const Dataset ds = load_dataset(flags.data_manifest);
    const RunConfig base = effective_config(flags, ds);
    const fs::path dir(flags.out_dir);
    fs::create_directories(dir);
    std::vector<SweepRow> rows;

    auto train_and_eval = [&](const RunConfig& cfg, const fs::path& run_dir, int eta,
                              const std::string& protocol) {
        write_run_provenance(run_dir, cfg, ds);
        Model model(cfg.model, cfg.train.seed);
        train(model, ds, cfg, run_dir.string());
        return evaluate(model, ds, cfg, protocol, eta,
                        (run_dir / "eval_report.csv").string());
    };

    if (kind == "eta") {
        // eta only changes inference, so one trained model serves every row.
        const fs::path run_dir = dir / "trained";
        write_run_provenance(run_dir, base, ds);
        Model model(base.model, base.train.seed);
        train(model, ds, base, run_dir.string());
        const int gallery_images =
            int(build_gallery(model, ds, ds.split_records("test")).v_unit.size());
        for (int eta : {0, 4, 8, 16, 32, 64}) {
            const int effective_eta = std::min(eta, gallery_images);
            SweepRow row;
            row.setting = std::to_string(eta);
            row.x = eta;
            row.summary = evaluate(model, ds, base, eta == 0 ? "global" : "local",
                                   effective_eta,
                                   (dir / ("eval_eta" + row.setting + ".csv")).string());
            rows.push_back(row);
        }
        write_sweep_outputs(dir, "eta", "eta", rows);
        for (size_t i = 1; i < rows.size(); ++i)
            if (rows[i].summary.decoder_calls < rows[i - 1].summary.decoder_calls)
                throw NumericError("eta sweep: decoder calls not monotone");
    } else if (kind == "mask-rate") {
        for (double alpha : {0.2, 0.4, 0.6, 0.8, 1.0}) {
            RunConfig cfg = base;
            cfg.train.alpha = float(alpha);
            std::ostringstream name;
            name << "alpha_" << alpha;
            SweepRow row;
            row.setting = std::to_string(alpha).substr(0, 3);
            row.x = alpha;
            row.summary = train_and_eval(cfg, dir / name.str(), base.eta, "local");
            rows.push_back(row);
        }
        write_sweep_outputs(dir, "mask_rate", "mask rate", rows);
    } else if (kind == "group") {
        // The five reference (p, r) combinations, defined at M=72 and scaled
        // to this run's max_len: 36/36, 36/18, 24/24, 48/24, 72/72.
        const int m = base.model.max_len;
        const std::vector<std::pair<int, int>> ref = {
            {36, 36}, {36, 18}, {24, 24}, {48, 24}, {72, 72}};
        for (auto [p72, r72] : ref) {
            RunConfig cfg = base;
            cfg.loss.group_size = std::max(1, p72 * m / 72);
            cfg.loss.group_stride = std::max(1, r72 * m / 72);
            const std::string setting = std::to_string(cfg.loss.group_size) + "/" +
                                        std::to_string(cfg.loss.group_stride);
            SweepRow row;
            row.setting = setting + " (kappa=" +
                          std::to_string(group_count(m, cfg.loss.group_size,
                                                     cfg.loss.group_stride)) +
                          ")";
            row.x = cfg.loss.group_stride;
            row.summary = train_and_eval(
                cfg, dir / ("group_" + std::to_string(cfg.loss.group_size) + "_" +
                            std::to_string(cfg.loss.group_stride)),
                base.eta, "local");
            rows.push_back(row);
        }
        write_sweep_outputs(dir, "group", "group stride", rows);
    } else {
        throw ValidationError("sweep: unknown kind '" + kind + "'");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attribute-person retrieval: data generation, training, evaluation, sweeps"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    int n_ids = 80, images_per_id = 4, captions_per_image = 2;
    double train_frac = 0.8;
    uint64_t gen_seed = 0;
    std::string gen_out = "data/synth";
    gen->add_option("--ids", n_ids, "number of identities");
    gen->add_option("--images-per-id", images_per_id, "images per identity");
    gen->add_option("--captions-per-image", captions_per_image, "captions per image");
    gen->add_option("--train-frac", train_frac, "train identity fraction");
    gen->add_option("--seed", gen_seed, "generation seed");
    int image_size = 32;
    gen->add_option("--image-size", image_size, "square image side in pixels");
    gen->add_option("--out", gen_out, "output directory");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    CommonFlags train_flags;
    train_flags.attach(tr, true);
    std::string resume_path;
    tr->add_option("--resume", resume_path, "checkpoint to resume from");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    CommonFlags eval_flags;
    eval_flags.attach(ev, false);
    std::string checkpoint, protocol = "global";
    int eta = 32;
    ev->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    ev->add_option("--protocol", protocol, "matching protocol")
        ->check(CLI::IsMember({"global", "local"}));
    ev->add_option("--eta", eta, "rerank budget for the local protocol");

    // sweep
    auto* sw = app.add_subcommand("sweep", "sweep one knob, retraining per setting");
    CommonFlags sweep_flags;
    sweep_flags.attach(sw, true);
    std::string kind;
    sw->add_option("--kind", kind, "eta | mask-rate | group")
        ->required()
        ->check(CLI::IsMember({"eta", "mask-rate", "group"}));

    try {
        app.parse(argc, argv);
        if (gen->parsed())
            return cmd_gen_data(n_ids, images_per_id, captions_per_image, train_frac,
                                gen_seed, image_size, gen_out);
        if (tr->parsed()) return cmd_train(train_flags, resume_path);
        if (ev->parsed()) return cmd_eval(eval_flags, checkpoint, protocol, eta);
        if (sw->parsed()) return cmd_sweep(sweep_flags, kind);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
