#include "vssl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "vssl/serialize.hpp"

namespace vssl {

namespace {

constexpr uint32_t kCheckpointMagic = 0x504b4356; // "VCKP" little-endian
constexpr uint64_t kPermStream = 0x5045524d;       // per-epoch batch permutation
constexpr uint64_t kDataStream = 0xda7a;           // per-step clip sampling/augmentation

std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace

double lr_schedule(int64_t step, int64_t total_steps, int64_t warmup_steps, double base_lr) {
    if (step < 0 || step >= total_steps)
        throw ContractError("lr_schedule: step out of range");
    if (warmup_steps > 0 && step < warmup_steps)
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// ---- metrics ------------------------------------------------------------------

const char* MetricsRow::csv_header() {
    return "step,epoch,lr,m,loss_total,loss_intra,loss_nn,qintra_len,qnn_len,nn_same_class_frac";
}

std::string MetricsRow::to_csv() const {
    std::ostringstream os;
    os << step << "," << epoch << "," << fmt_g17(lr) << "," << fmt_g17(m) << ","
       << fmt_g17(loss_total) << "," << fmt_g17(loss_intra) << "," << fmt_g17(loss_nn) << ","
       << qintra_len << "," << qnn_len << ",";
    if (std::isnan(nn_same_class_frac))
        os << "nan";
    else
        os << fmt_g17(nn_same_class_frac);
    return os.str();
}

MetricsRow MetricsRow::from_csv(const std::string& line, int lineno) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 10)
        throw DataError("metrics:" + std::to_string(lineno) + ": expected 10 fields, got " +
                        std::to_string(fields.size()));
    try {
        MetricsRow r;
        r.step = std::stoll(fields[0]);
        r.epoch = std::stoi(fields[1]);
        r.lr = std::stod(fields[2]);
        r.m = std::stod(fields[3]);
        r.loss_total = std::stod(fields[4]);
        r.loss_intra = std::stod(fields[5]);
        r.loss_nn = std::stod(fields[6]);
        r.qintra_len = std::stoi(fields[7]);
        r.qnn_len = std::stoi(fields[8]);
        r.nn_same_class_frac = std::stod(fields[9]);
        return r;
    } catch (const std::exception&) {
        throw DataError("metrics:" + std::to_string(lineno) + ": malformed numeric field");
    }
}

// ---- checkpoint ---------------------------------------------------------------

namespace {

void write_named_arrays(std::ostream& os,
                        const std::vector<std::pair<std::string, std::vector<float>>>& arrays) {
    write_u64(os, arrays.size());
    for (const auto& [name, data] : arrays) {
        write_string(os, name);
        write_f32_array(os, data);
    }
}

std::vector<std::pair<std::string, std::vector<float>>> read_named_arrays(std::istream& is) {
    const uint64_t n = read_u64(is);
    std::vector<std::pair<std::string, std::vector<float>>> out;
    out.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        std::string name = read_string(is);
        out.emplace_back(std::move(name), read_f32_array(is));
    }
    return out;
}

void write_queue(std::ostream& os, const std::vector<QueueEntry>& entries) {
    write_u64(os, entries.size());
    for (const auto& e : entries) {
        write_i64(os, e.video_id);
        write_i32(os, e.class_id);
        write_f32_array(os, e.embedding);
    }
}

std::vector<QueueEntry> read_queue(std::istream& is) {
    const uint64_t n = read_u64(is);
    std::vector<QueueEntry> out;
    out.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        QueueEntry e;
        e.video_id = read_i64(is);
        e.class_id = read_i32(is);
        e.embedding = read_f32_array(is);
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint: " + path);
    write_u32(os, kCheckpointMagic);
    write_u32(os, ckpt.format_version);
    write_string(os, ckpt.config_text);
    write_named_arrays(os, ckpt.query_weights);
    write_named_arrays(os, ckpt.key_weights);
    write_named_arrays(os, ckpt.velocity);
    write_queue(os, ckpt.q_intra);
    write_queue(os, ckpt.q_nn);
    write_i64(os, ckpt.global_step);
    write_i32(os, ckpt.epoch);
    write_string(os, ckpt.rng_state);
    os.flush();
    if (!os) throw DataError("checkpoint write failed: " + path);

    // plain-text sidecar manifest for inspection
    std::ofstream manifest(path + ".txt");
    if (!manifest) throw DataError("cannot write checkpoint manifest: " + path + ".txt");
    manifest << "format_version " << ckpt.format_version << "\n";
    manifest << "global_step " << ckpt.global_step << "\n";
    manifest << "epoch " << ckpt.epoch << "\n";
    manifest << "qintra_len " << ckpt.q_intra.size() << "\n";
    manifest << "qnn_len " << ckpt.q_nn.size() << "\n";
    for (const auto& [name, data] : ckpt.query_weights)
        manifest << "tensor " << name << " " << data.size() << "\n";
    for (const auto& [name, data] : ckpt.key_weights)
        manifest << "tensor " << name << " " << data.size() << "\n";
    for (const auto& [name, data] : ckpt.velocity)
        manifest << "tensor opt." << name << " " << data.size() << "\n";
    manifest << "config_begin\n" << ckpt.config_text << "config_end\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    if (read_u32(is) != kCheckpointMagic) throw DataError("not a checkpoint file: " + path);
    Checkpoint ckpt;
    ckpt.format_version = read_u32(is);
    if (ckpt.format_version != 1)
        throw DataError("unsupported checkpoint format version " +
                        std::to_string(ckpt.format_version));
    ckpt.config_text = read_string(is);
    ckpt.query_weights = read_named_arrays(is);
    ckpt.key_weights = read_named_arrays(is);
    ckpt.velocity = read_named_arrays(is);
    ckpt.q_intra = read_queue(is);
    ckpt.q_nn = read_queue(is);
    ckpt.global_step = read_i64(is);
    ckpt.epoch = read_i32(is);
    ckpt.rng_state = read_string(is);
    return ckpt;
}

// ---- optimizer ----------------------------------------------------------------

SgdMomentum::SgdMomentum(double momentum, double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {}

void SgdMomentum::attach(const std::vector<NamedTensor>& params) {
    names_.clear();
    velocity_.clear();
    for (const auto& p : params) {
        names_.push_back(p.name);
        velocity_.emplace_back(p.tensor.numel(), 0.0f);
    }
}

void SgdMomentum::step(std::vector<NamedTensor>& params, double lr) {
    if (params.size() != velocity_.size())
        throw ContractError("optimizer: parameter set changed since attach()");
    for (size_t i = 0; i < params.size(); ++i) {
        auto& w = params[i].tensor.raw_data();
        auto& v = velocity_[i];
        const bool has_grad = params[i].tensor.has_grad();
        const std::vector<float>* g = has_grad ? &params[i].tensor.grad() : nullptr;
        for (size_t j = 0; j < w.size(); ++j) {
            const double grad = (g ? (*g)[j] : 0.0) + weight_decay_ * w[j];
            const double vel = momentum_ * v[j] + grad;
            v[j] = static_cast<float>(vel);
            w[j] = static_cast<float>(w[j] - lr * vel);
        }
    }
}

std::vector<std::pair<std::string, std::vector<float>>> SgdMomentum::state() const {
    std::vector<std::pair<std::string, std::vector<float>>> out;
    for (size_t i = 0; i < names_.size(); ++i) out.emplace_back(names_[i], velocity_[i]);
    return out;
}

void SgdMomentum::restore(const std::vector<std::pair<std::string, std::vector<float>>>& state,
                          const std::vector<NamedTensor>& params) {
    attach(params);
    if (state.size() != names_.size())
        throw DataError("optimizer state has " + std::to_string(state.size()) +
                        " buffers, expected " + std::to_string(names_.size()));
    for (size_t i = 0; i < state.size(); ++i) {
        if (state[i].first != names_[i])
            throw DataError("optimizer state name mismatch: " + state[i].first + " vs " + names_[i]);
        if (state[i].second.size() != velocity_[i].size())
            throw DataError("optimizer state size mismatch for " + names_[i]);
        velocity_[i] = state[i].second;
    }
}

// ---- trainer ------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      pair_(cfg.encoder_config(), cfg.seed),
      q_intra_(cfg.queue_capacity),
      q_nn_(cfg.queue_capacity),
      opt_(cfg.sgd_momentum, cfg.weight_decay) {
    cfg_.validate();
    corpus_ = generate_dataset(cfg_.data_config());
    auto params = pair_.query_parameters();
    opt_.attach(params);
    Rng master(mix64(cfg_.seed, 0x4d415354));
    master_rng_state_ = master.save_state();
}

Trainer Trainer::from_checkpoint(const std::string& path, const TrainConfig& cfg) {
    const Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config_text != cfg.canonical_text())
        throw ConfigError("resume: config does not match the checkpoint snapshot");
    Trainer t(cfg);
    auto restore_weights = [](std::vector<NamedTensor> params,
                              const std::vector<std::pair<std::string, std::vector<float>>>& saved) {
        if (params.size() != saved.size()) throw DataError("checkpoint: weight count mismatch");
        for (size_t i = 0; i < params.size(); ++i) {
            if (params[i].name != saved[i].first)
                throw DataError("checkpoint: tensor name mismatch: " + saved[i].first);
            if (params[i].tensor.numel() != static_cast<int64_t>(saved[i].second.size()))
                throw DataError("checkpoint: tensor size mismatch for " + saved[i].first);
            params[i].tensor.raw_data() = saved[i].second;
        }
    };
    restore_weights(t.pair_.query_parameters(), ckpt.query_weights);
    restore_weights(t.pair_.key_parameters(), ckpt.key_weights);
    auto params = t.pair_.query_parameters();
    t.opt_.restore(ckpt.velocity, params);
    t.q_intra_.clear();
    t.q_nn_.clear();
    t.q_intra_.enqueue_batch(ckpt.q_intra);
    t.q_nn_.enqueue_batch(ckpt.q_nn);
    t.global_step_ = ckpt.global_step;
    t.master_rng_state_ = ckpt.rng_state;
    return t;
}

Checkpoint Trainer::make_checkpoint() const {
    Checkpoint ckpt;
    ckpt.config_text = cfg_.canonical_text();
    for (const auto& p : pair_.query_parameters())
        ckpt.query_weights.emplace_back(p.name, p.tensor.values());
    for (const auto& p : pair_.key_parameters())
        ckpt.key_weights.emplace_back(p.name, p.tensor.values());
    ckpt.velocity = opt_.state();
    ckpt.q_intra.assign(q_intra_.entries().begin(), q_intra_.entries().end());
    ckpt.q_nn.assign(q_nn_.entries().begin(), q_nn_.entries().end());
    ckpt.global_step = global_step_;
    ckpt.epoch = epoch();
    ckpt.rng_state = master_rng_state_;
    return ckpt;
}

std::vector<int> Trainer::batch_indices(int64_t step) const {
    const int spe = cfg_.steps_per_epoch();
    const int64_t ep = step / spe;
    const int pos = static_cast<int>(step % spe);
    // per-epoch Fisher-Yates permutation, a pure function of (seed, epoch)
    std::vector<int> perm(static_cast<size_t>(cfg_.n_videos));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix64(cfg_.seed, kPermStream, static_cast<uint64_t>(ep)));
    for (int i = cfg_.n_videos - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.uniform_int(0, i))]);
    return {perm.begin() + static_cast<std::ptrdiff_t>(pos) * cfg_.batch_size,
            perm.begin() + static_cast<std::ptrdiff_t>(pos + 1) * cfg_.batch_size};
}

double Trainer::anneal_progress(int64_t step) const {
    const int64_t total = cfg_.total_steps();
    return total > 1 ? static_cast<double>(step) / static_cast<double>(total - 1) : 1.0;
}

MetricsRow Trainer::train_step(std::vector<float>* grad_out) {
    const int64_t s = global_step_;
    if (s >= cfg_.total_steps()) throw ContractError("train_step: run is already complete");
    const int64_t warmup_steps = static_cast<int64_t>(cfg_.warmup_epochs) * cfg_.steps_per_epoch();
    const double lr = lr_schedule(s, cfg_.total_steps(), warmup_steps, cfg_.base_lr);
    const DataConfig dcfg = cfg_.data_config();
    const LossWeights weights = cfg_.loss_weights();
    const bool momentum_mode = cfg_.mode == TrainerMode::momentum;

    const std::vector<int> indices = batch_indices(s);
    Rng data_rng(mix64(cfg_.seed, kDataStream, static_cast<uint64_t>(s)));

    struct SampleOut {
        LossBreakdown breakdown;
        QueueEntry intra_key, nn_key;
        int class_id;
    };
    std::vector<SampleOut> outputs;
    outputs.reserve(indices.size());
    std::vector<Tensor> sample_losses;
    sample_losses.reserve(indices.size());

    for (const int vi : indices) {
        const SyntheticVideo& video = corpus_[static_cast<size_t>(vi)];
        const ClipPair clips = sample_clip_pair(video, data_rng, dcfg);

        PairEmbeddings z;
        const auto q1 = pair_.embed_both(clips.x1, Side::query);
        const auto q2 = pair_.embed_both(clips.x2, Side::query);
        z.intra_1q = q1.intra;
        z.intra_2q = q2.intra;
        if (nn_branch_enabled_) {
            z.nn_1q = q1.nn;
            z.nn_2q = q2.nn;
        }
        if (momentum_mode) {
            const auto k1 = pair_.embed_both(clips.x1, Side::key);
            const auto k2 = pair_.embed_both(clips.x2, Side::key);
            z.intra_1k = k1.intra;
            z.intra_2k = k2.intra;
            if (nn_branch_enabled_) {
                z.nn_1k = k1.nn;
                z.nn_2k = k2.nn;
            }
        } else {
            // Algorithm-2 mode: keys are detached query-encoder outputs
            z.intra_1k = q1.intra.detach();
            z.intra_2k = q2.intra.detach();
            if (nn_branch_enabled_) {
                z.nn_1k = q1.nn.detach();
                z.nn_2k = q2.nn.detach();
            }
        }

        SampleOut out;
        if (nn_branch_enabled_) {
            out.breakdown = combined_loss(z, q_intra_, q_nn_, weights, cfg_.min_nn_pool);
        } else {
            // NN path removed: only the intra term exists
            Tensor fwd = intra_loss(z.intra_1q, z.intra_2k, q_intra_, weights.temperature);
            Tensor bwd = intra_loss(z.intra_2q, z.intra_1k, q_intra_, weights.temperature);
            Tensor intra_term = scale(add(fwd, bwd), 0.5);
            out.breakdown.total = scale(intra_term, weights.lambda_intra);
            out.breakdown.total_value = out.breakdown.total.item();
            out.breakdown.intra_term = intra_term.item();
            out.breakdown.intra_fwd = fwd.item();
            out.breakdown.intra_bwd = bwd.item();
        }
        out.class_id = video.class_id;
        out.intra_key = {z.intra_2k.values(), video.video_id, video.class_id};
        if (nn_branch_enabled_) out.nn_key = {z.nn_2k.values(), video.video_id, video.class_id};
        sample_losses.push_back(out.breakdown.total);
        outputs.push_back(std::move(out));
    }

    Tensor batch_sum = sample_losses[0];
    for (size_t i = 1; i < sample_losses.size(); ++i) batch_sum = add(batch_sum, sample_losses[i]);
    Tensor batch_loss = scale(batch_sum, 1.0 / static_cast<double>(sample_losses.size()));

    if (!all_finite(batch_loss)) {
        std::ostringstream dump;
        dump << "non-finite loss at step " << s << " (lr=" << lr << ")\n";
        for (size_t i = 0; i < outputs.size(); ++i) {
            const auto& b = outputs[i].breakdown;
            if (std::isfinite(b.total_value)) continue;
            dump << "sample " << i << ": intra_fwd=" << b.intra_fwd << " intra_bwd=" << b.intra_bwd
                 << " nn_fwd=" << b.nn_fwd << " nn_bwd=" << b.nn_bwd << "\n";
            // logits of the failing sample against the intra queue, scaled by 1/tau
            if (!q_intra_.empty()) {
                const auto row = q_intra_.similarity_row(outputs[i].intra_key.embedding);
                dump << "  intra logits:";
                for (float r : row) dump << " " << r / weights.temperature;
                dump << "\n";
            }
        }
        throw TrainingDivergedError(dump.str());
    }

    backward(batch_loss);

    auto params = pair_.query_parameters();
    if (grad_out) {
        grad_out->clear();
        for (const auto& p : params) {
            if (p.tensor.has_grad()) {
                const auto& g = p.tensor.grad();
                grad_out->insert(grad_out->end(), g.begin(), g.end());
            } else {
                grad_out->insert(grad_out->end(), static_cast<size_t>(p.tensor.numel()), 0.0f);
            }
        }
    }
    opt_.step(params, lr);
    for (auto& p : params) p.tensor.zero_grad();

    double m_used = 0.0;
    if (momentum_mode) {
        m_used = anneal_momentum(anneal_progress(s), cfg_.momentum_init);
        pair_.momentum_update(m_used);
    } else {
        pair_.copy_query_to_key();
    }

    // NN pick indices refer to the queue as it stood during the loss pass,
    // so the same-class metric is read off before this step's enqueue
    double total = 0.0, intra = 0.0, nn = 0.0;
    int picks = 0, same = 0;
    for (const auto& out : outputs) {
        total += out.breakdown.total_value;
        intra += out.breakdown.intra_term;
        nn += out.breakdown.nn_term;
        for (int idx : {out.breakdown.nn_index_fwd, out.breakdown.nn_index_bwd}) {
            if (idx < 0) continue;
            ++picks;
            if (q_nn_.at(idx).class_id == out.class_id) ++same;
        }
    }

    // enqueue the x2 key embeddings, batch order preserved: intra queue first
    std::vector<QueueEntry> intra_batch, nn_batch;
    intra_batch.reserve(outputs.size());
    nn_batch.reserve(outputs.size());
    for (auto& out : outputs) intra_batch.push_back(std::move(out.intra_key));
    q_intra_.enqueue_batch(intra_batch);
    if (nn_branch_enabled_) {
        for (auto& out : outputs) nn_batch.push_back(std::move(out.nn_key));
        q_nn_.enqueue_batch(nn_batch);
    }

    MetricsRow row;
    row.step = s;
    row.epoch = static_cast<int>(s / cfg_.steps_per_epoch());
    row.lr = lr;
    row.m = m_used;
    row.qintra_len = q_intra_.size();
    row.qnn_len = q_nn_.size();
    const double inv = 1.0 / static_cast<double>(outputs.size());
    row.loss_total = total * inv;
    row.loss_intra = intra * inv;
    row.loss_nn = nn * inv;
    row.nn_same_class_frac =
        picks > 0 ? static_cast<double>(same) / picks : std::numeric_limits<double>::quiet_NaN();

    ++global_step_;
    return row;
}

std::string Trainer::run(const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream metrics(fs::path(out_dir) / "metrics.csv");
    if (!metrics) throw DataError("cannot write metrics.csv in " + out_dir);
    metrics << MetricsRow::csv_header() << "\n";

    const int spe = cfg_.steps_per_epoch();
    std::string final_path;
    while (global_step_ < cfg_.total_steps()) {
        const MetricsRow row = train_step();
        metrics << row.to_csv() << "\n";
        if (!metrics) throw DataError("metrics write failed in " + out_dir);
        const bool epoch_done = (global_step_ % spe) == 0;
        if (epoch_done) {
            const int finished_epoch = static_cast<int>(global_step_ / spe); // 1-based
            if (finished_epoch % cfg_.checkpoint_interval == 0 &&
                global_step_ < cfg_.total_steps()) {
                char name[48];
                std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.bin", finished_epoch);
                save_checkpoint(make_checkpoint(), (fs::path(out_dir) / name).string());
            }
        }
    }
    final_path = (fs::path(out_dir) / "ckpt_final.bin").string();
    save_checkpoint(make_checkpoint(), final_path);
    metrics.flush();
    return final_path;
}

} // namespace vssl
