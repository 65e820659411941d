#include "cada/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cada/checkpoint.hpp"
#include "cada/losses.hpp"

namespace fs = std::filesystem;

namespace cada {

namespace {

void write_run_meta(const std::string& out_dir, const RunConfig& config, const Dataset& dataset) {
    std::ofstream os(fs::path(out_dir) / "run_meta.txt");
    os << "config_hash=" << config.hash() << "\n";
    os << "dataset_hash=" << dataset.manifest_hash() << "\n";
    os << "seed=" << config.train.seed << "\n";
    os << "# effective config\n" << config.to_text();
}

void append_log_row(std::ofstream& os, const LossRow& r) {
    os << r.step << "," << r.ndf << "," << r.atp << "," << r.ara << "," << r.total << "," << r.lr
       << "\n";
}

void dump_bad_batch(const std::string& out_dir, int64_t step, const PairBatch& batch) {
    std::ofstream os(fs::path(out_dir) / "bad_batch.txt");
    os << "non-finite loss at step " << step << "\n";
    for (const auto& s : batch.samples) os << "identity " << s.identity << "\n";
}

}  // namespace

int64_t steps_per_epoch(const Dataset& dataset, const RunConfig& config) {
    const auto train_records = dataset.split_records("train");
    if (train_records.empty()) throw ValidationError("train: dataset has no train split");
    return std::max<int64_t>(1, int64_t(train_records.size()) / config.train.batch_size);
}

TrainResult train(Model& model, const Dataset& dataset, const RunConfig& config,
                  const std::string& out_dir, int64_t resume_from_step,
                  AdamW* resumed_optimizer, int64_t stop_at_step) {
    config.validate();
    fs::create_directories(out_dir);
    const auto train_records = dataset.split_records("train");
    const int64_t spe = steps_per_epoch(dataset, config);
    const int64_t total_steps = spe * config.train.epochs;
    if (resume_from_step > total_steps)
        throw ValidationError("train: resume step beyond configured schedule");
    const int64_t last_step =
        stop_at_step > 0 ? std::min(stop_at_step, total_steps) : total_steps;

    AdamW local_opt(config.train.lr, config.train.weight_decay);
    AdamW& opt = resumed_optimizer ? *resumed_optimizer : local_opt;

    write_run_meta(out_dir, config, dataset);
    const std::string log_path = (fs::path(out_dir) / "train_log.csv").string();
    std::ofstream log(log_path, resume_from_step > 0 ? std::ios::app : std::ios::trunc);
    if (resume_from_step == 0) log << "step,ndf,atp,ara,total,lr\n";

    const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.bin").string();
    TrainResult result;
    result.log_path = log_path;
    result.checkpoint_path = ckpt_path;

    auto save = [&](int64_t step) {
        const auto sharing = model.verify_sharing();
        if (!sharing.ok)
            throw ValidationError("train: parameter sharing broken at step " +
                                  std::to_string(step) + ": " + sharing.mismatches.front());
        TrainState ts;
        ts.optimizer = &opt;
        ts.step = step;
        save_checkpoint(ckpt_path, model.params(), config.hash(), &ts);
    };

    for (int64_t step = resume_from_step; step < last_step; ++step) {
        std::mt19937 step_rng(uint32_t(mix_seed(config.train.seed, 0x57E9000ULL + uint64_t(step))));
        PairBatch batch = make_batch(dataset, train_records, config.train.batch_size,
                                     config.train.alpha, config.model.max_len, step_rng);
        const float lr = cosine_lr(config.train.lr, step, total_steps);
        opt.set_lr(lr);

        const_cast<ParamRegistry&>(model.params()).zero_grad();
        LossBreakdown losses = total_loss(model, batch, config.loss);
        const float total = losses.total.item();
        if (!std::isfinite(total)) {
            dump_bad_batch(out_dir, step, batch);
            throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                               " (diagnostics in bad_batch.txt)");
        }
        losses.total.backward();
        opt.step(model.params());

        LossRow row{step, losses.ndf, losses.atp, losses.ara, total, lr};
        append_log_row(log, row);
        result.rows.push_back(row);

        if (config.train.checkpoint_every > 0 && (step + 1) % config.train.checkpoint_every == 0)
            save(step + 1);
    }
    save(last_step);
    result.final_step = last_step;
    return result;
}

TrainResult resume(Model& model, const Dataset& dataset, const RunConfig& config,
                   const std::string& checkpoint_path, const std::string& out_dir) {
    AdamW opt(config.train.lr, config.train.weight_decay);
    const int64_t step = load_checkpoint(checkpoint_path, model.params(), config.hash(), &opt);
    return train(model, dataset, config, out_dir, step, &opt);
}

}  // namespace cada
