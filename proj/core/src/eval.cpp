#include "vssl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "vssl/serialize.hpp"
#include "vssl/trainer.hpp"

namespace vssl {

namespace {

constexpr uint32_t kFeatureMagic = 0x46535356; // "VSSF" little-endian
constexpr uint32_t kFeatureVersion = 1;
constexpr uint64_t kSplitStream = 0x5350114;
constexpr uint64_t kFewshotStream = 0xfe33;

std::map<int, std::vector<int>> by_class(std::span<const int> class_ids) {
    std::map<int, std::vector<int>> groups;
    for (size_t i = 0; i < class_ids.size(); ++i)
        groups[class_ids[i]].push_back(static_cast<int>(i));
    return groups;
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(rng.uniform_int(0, i))]);
}

} // namespace

EvalSplit stratified_split(const std::vector<SyntheticVideo>& videos, double test_fraction,
                           uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw ConfigError("test_fraction must lie in (0,1)");
    std::vector<int> classes;
    classes.reserve(videos.size());
    for (const auto& v : videos) classes.push_back(v.class_id);
    EvalSplit split;
    for (auto& [cls, idx] : by_class(classes)) {
        const int n_test = static_cast<int>(std::llround(test_fraction * idx.size()));
        if (n_test < 1 || n_test >= static_cast<int>(idx.size()))
            throw ConfigError("test_fraction " + std::to_string(test_fraction) +
                              " cannot stratify class " + std::to_string(cls) + " with " +
                              std::to_string(idx.size()) + " videos");
        Rng rng(mix64(seed, kSplitStream, static_cast<uint64_t>(cls)));
        shuffle_indices(idx, rng);
        split.test_indices.insert(split.test_indices.end(), idx.begin(), idx.begin() + n_test);
        split.train_indices.insert(split.train_indices.end(), idx.begin() + n_test, idx.end());
    }
    std::sort(split.train_indices.begin(), split.train_indices.end());
    std::sort(split.test_indices.begin(), split.test_indices.end());
    return split;
}

FrozenFeatures extract_features(const EncoderPair& pair, const std::vector<SyntheticVideo>& videos,
                                std::span<const int> indices, const std::string& split_tag,
                                const DataConfig& cfg) {
    NoGradGuard ng;
    FrozenFeatures out;
    out.dim = pair.config().backbone_dim();
    out.split = split_tag;
    const int t_start = (cfg.total_frames - cfg.clip_len) / 2;
    AugmentParams center;
    center.crop_size = cfg.crop;
    center.crop_x = (cfg.canvas - cfg.crop) / 2;
    center.crop_y = (cfg.canvas - cfg.crop) / 2;
    for (const int i : indices) {
        const auto& video = videos[static_cast<size_t>(i)];
        const Tensor clip = augment(video, t_start, center, cfg);
        const Tensor feat = pair.features(clip, Side::query);
        const auto& v = feat.values();
        out.data.insert(out.data.end(), v.begin(), v.end());
        out.class_ids.push_back(video.class_id);
        out.video_ids.push_back(video.video_id);
    }
    return out;
}

double linear_probe(const FrozenFeatures& train, const FrozenFeatures& test, int epochs, double lr) {
    if (train.rows() == 0 || test.rows() == 0) throw ConfigError("linear_probe: empty split");
    if (train.dim != test.dim) throw ConfigError("linear_probe: feature dims disagree");
    std::vector<int> classes(train.class_ids.begin(), train.class_ids.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) throw ConfigError("linear_probe: train split has a single class");
    std::map<int, int> class_to_col;
    for (size_t i = 0; i < classes.size(); ++i) class_to_col[classes[i]] = static_cast<int>(i);
    const int k = static_cast<int>(classes.size());
    const int d = train.dim;
    const int n = train.rows();

    // standardize with train statistics
    std::vector<double> mean(d, 0.0), stddev(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mean[j] += train.row(i)[j];
    for (int j = 0; j < d; ++j) mean[j] /= n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double c = train.row(i)[j] - mean[j];
            stddev[j] += c * c;
        }
    for (int j = 0; j < d; ++j) stddev[j] = std::max(std::sqrt(stddev[j] / n), 1e-8);

    const auto standardized = [&](const FrozenFeatures& f, int i, int j) {
        return (static_cast<double>(f.row(i)[j]) - mean[j]) / stddev[j];
    };

    std::vector<double> weights(static_cast<size_t>(k) * d, 0.0), bias(k, 0.0);

    const auto forward_loss = [&](const std::vector<double>& w, const std::vector<double>& b,
                                  std::vector<double>* grad_w, std::vector<double>* grad_b) {
        double loss = 0.0;
        if (grad_w) {
            std::fill(grad_w->begin(), grad_w->end(), 0.0);
            std::fill(grad_b->begin(), grad_b->end(), 0.0);
        }
        std::vector<double> logits(k), probs(k);
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < k; ++c) {
                double z = b[c];
                for (int j = 0; j < d; ++j) z += w[static_cast<size_t>(c) * d + j] * standardized(train, i, j);
                logits[c] = z;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double sum = 0.0;
            for (int c = 0; c < k; ++c) sum += (probs[c] = std::exp(logits[c] - mx));
            const int y = class_to_col.at(train.class_ids[static_cast<size_t>(i)]);
            loss += -(logits[y] - mx - std::log(sum));
            if (grad_w) {
                for (int c = 0; c < k; ++c) {
                    const double delta = probs[c] / sum - (c == y ? 1.0 : 0.0);
                    (*grad_b)[c] += delta / n;
                    for (int j = 0; j < d; ++j)
                        (*grad_w)[static_cast<size_t>(c) * d + j] += delta * standardized(train, i, j) / n;
                }
            }
        }
        return loss / n;
    };

    std::vector<double> grad_w(weights.size()), grad_b(bias.size());
    double current_lr = lr;
    double loss = forward_loss(weights, bias, &grad_w, &grad_b);
    for (int e = 0; e < epochs; ++e) {
        // backtracking: shrink the step by 10x until the full-batch loss
        // is non-increasing (convex objective, so this terminates)
        while (current_lr > 1e-12) {
            std::vector<double> w_new(weights), b_new(bias);
            for (size_t i = 0; i < w_new.size(); ++i) w_new[i] -= current_lr * grad_w[i];
            for (size_t i = 0; i < b_new.size(); ++i) b_new[i] -= current_lr * grad_b[i];
            std::vector<double> gw_new(grad_w.size()), gb_new(grad_b.size());
            const double loss_new = forward_loss(w_new, b_new, &gw_new, &gb_new);
            if (loss_new <= loss) {
                weights.swap(w_new);
                bias.swap(b_new);
                grad_w.swap(gw_new);
                grad_b.swap(gb_new);
                loss = loss_new;
                break;
            }
            current_lr /= 10.0;
        }
    }

    int correct = 0;
    for (int i = 0; i < test.rows(); ++i) {
        int best = 0;
        double best_z = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            double z = bias[c];
            for (int j = 0; j < d; ++j) {
                const double xj = (static_cast<double>(test.row(i)[j]) - mean[j]) / stddev[j];
                z += weights[static_cast<size_t>(c) * d + j] * xj;
            }
            if (z > best_z) {
                best_z = z;
                best = c;
            }
        }
        if (classes[static_cast<size_t>(best)] == test.class_ids[static_cast<size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / test.rows();
}

RetrievalResult recall_at_k(const FrozenFeatures& query, const FrozenFeatures& gallery,
                            const std::vector<int>& ks) {
    if (gallery.rows() == 0) throw ConfigError("recall_at_k: empty gallery");
    if (query.dim != gallery.dim) throw ConfigError("recall_at_k: feature dims disagree");
    for (int k : ks)
        if (k <= 0 || k > gallery.rows())
            throw ConfigError("recall_at_k: k=" + std::to_string(k) + " exceeds gallery size " +
                              std::to_string(gallery.rows()));

    const auto cosine_norm = [](std::span<const float> v) {
        double sq = 0.0;
        for (float x : v) sq += static_cast<double>(x) * x;
        return std::sqrt(sq);
    };
    std::vector<double> gallery_norms(static_cast<size_t>(gallery.rows()));
    for (int i = 0; i < gallery.rows(); ++i) gallery_norms[static_cast<size_t>(i)] = cosine_norm(gallery.row(i));

    RetrievalResult result;
    result.ks = ks;
    result.recall.assign(ks.size(), 0.0);
    std::vector<std::pair<double, int>> scored(static_cast<size_t>(gallery.rows()));
    for (int qi = 0; qi < query.rows(); ++qi) {
        const auto q = query.row(qi);
        const double qn = cosine_norm(q);
        for (int gi = 0; gi < gallery.rows(); ++gi) {
            double dotp = 0.0;
            const auto g = gallery.row(gi);
            for (int j = 0; j < gallery.dim; ++j) dotp += static_cast<double>(q[j]) * g[j];
            const double denom = qn * gallery_norms[static_cast<size_t>(gi)];
            scored[static_cast<size_t>(gi)] = {denom > 0.0 ? dotp / denom : 0.0, gi};
        }
        // descending similarity, ties toward the lower gallery index
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        const int qc = query.class_ids[static_cast<size_t>(qi)];
        int rank_of_first_hit = -1;
        for (int r = 0; r < gallery.rows(); ++r) {
            if (gallery.class_ids[static_cast<size_t>(scored[static_cast<size_t>(r)].second)] == qc) {
                rank_of_first_hit = r;
                break;
            }
        }
        for (size_t ki = 0; ki < ks.size(); ++ki)
            if (rank_of_first_hit >= 0 && rank_of_first_hit < ks[ki]) result.recall[ki] += 1.0;
    }
    for (auto& r : result.recall) r /= std::max(1, query.rows());
    return result;
}

FrozenFeatures few_shot_subset(const FrozenFeatures& features, double fraction, uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw ConfigError("few_shot_subset: fraction must lie in (0,1]");
    if (fraction == 1.0) return features;
    std::vector<int> selected;
    for (auto& [cls, idx] : by_class(features.class_ids)) {
        const int count = static_cast<int>(std::llround(fraction * idx.size()));
        if (count < 1)
            throw ConfigError("few_shot_subset: fraction " + std::to_string(fraction) +
                              " leaves class " + std::to_string(cls) + " empty");
        Rng rng(mix64(seed, kFewshotStream, static_cast<uint64_t>(cls)));
        shuffle_indices(idx, rng);
        selected.insert(selected.end(), idx.begin(), idx.begin() + count);
    }
    std::sort(selected.begin(), selected.end());

    FrozenFeatures out;
    out.dim = features.dim;
    out.split = features.split;
    for (int i : selected) {
        const auto r = features.row(i);
        out.data.insert(out.data.end(), r.begin(), r.end());
        out.class_ids.push_back(features.class_ids[static_cast<size_t>(i)]);
        out.video_ids.push_back(features.video_ids[static_cast<size_t>(i)]);
    }
    return out;
}

double cooccurrence_probability(int n_classes, int64_t queue_size) {
    if (n_classes < 1) throw ConfigError("cooccurrence_probability: class count must be >= 1");
    if (queue_size < 0) throw ConfigError("cooccurrence_probability: queue size must be >= 0");
    const double ratio = static_cast<double>(n_classes - 1) / static_cast<double>(n_classes);
    return 1.0 - std::pow(ratio, static_cast<double>(queue_size));
}

double nn_quality(const EncoderPair& pair, const std::vector<SyntheticVideo>& videos,
                  const DataConfig& cfg) {
    constexpr int kTop = 5;
    const int n = static_cast<int>(videos.size());
    if (n < kTop + 1)
        throw ConfigError("nn_quality: corpus of " + std::to_string(n) + " is smaller than " +
                          std::to_string(kTop + 1));
    NoGradGuard ng;
    const int t_start = (cfg.total_frames - cfg.clip_len) / 2;
    AugmentParams center;
    center.crop_size = cfg.crop;
    center.crop_x = (cfg.canvas - cfg.crop) / 2;
    center.crop_y = (cfg.canvas - cfg.crop) / 2;

    const int dim = pair.config().embed_dim;
    std::vector<float> embeds(static_cast<size_t>(n) * dim);
    for (int i = 0; i < n; ++i) {
        const Tensor clip = augment(videos[static_cast<size_t>(i)], t_start, center, cfg);
        const Tensor z = pair.embed(clip, Branch::nn, Side::query);
        std::copy(z.values().begin(), z.values().end(), embeds.begin() + static_cast<size_t>(i) * dim);
    }

    double total = 0.0;
    std::vector<std::pair<double, int>> scored;
    for (int i = 0; i < n; ++i) {
        scored.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double dotp = 0.0;
            for (int c = 0; c < dim; ++c)
                dotp += static_cast<double>(embeds[static_cast<size_t>(i) * dim + c]) *
                        embeds[static_cast<size_t>(j) * dim + c];
            scored.emplace_back(dotp, j);
        }
        std::partial_sort(scored.begin(), scored.begin() + kTop, scored.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        int same = 0;
        for (int r = 0; r < kTop; ++r)
            if (videos[static_cast<size_t>(scored[static_cast<size_t>(r)].second)].class_id ==
                videos[static_cast<size_t>(i)].class_id)
                ++same;
        total += static_cast<double>(same) / kTop;
    }
    return total / n;
}

void save_features(const FrozenFeatures& features, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write features: " + path);
    write_u32(os, kFeatureMagic);
    write_u32(os, kFeatureVersion);
    write_u32(os, static_cast<uint32_t>(features.rows()));
    write_u32(os, static_cast<uint32_t>(features.dim));
    write_string(os, features.split);
    for (int c : features.class_ids) write_i32(os, c);
    for (int64_t v : features.video_ids) write_i64(os, v);
    for (float x : features.data) write_f32(os, x);
    if (!os) throw DataError("feature write failed: " + path);
}

FrozenFeatures load_features(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open features: " + path);
    if (read_u32(is) != kFeatureMagic) throw DataError("not a feature file: " + path);
    if (read_u32(is) != kFeatureVersion) throw DataError("unsupported feature file version");
    FrozenFeatures out;
    const uint32_t rows = read_u32(is);
    out.dim = static_cast<int>(read_u32(is));
    out.split = read_string(is);
    out.class_ids.resize(rows);
    for (auto& c : out.class_ids) c = read_i32(is);
    out.video_ids.resize(rows);
    for (auto& v : out.video_ids) v = read_i64(is);
    out.data.resize(static_cast<size_t>(rows) * out.dim);
    for (auto& x : out.data) x = read_f32(is);
    return out;
}

EncoderPair encoder_from_checkpoint(const std::string& path, const TrainConfig& cfg) {
    const Checkpoint ckpt = load_checkpoint(path);
    EncoderPair pair(cfg.encoder_config(), cfg.seed);
    auto restore = [](std::vector<NamedTensor> params,
                      const std::vector<std::pair<std::string, std::vector<float>>>& saved) {
        if (params.size() != saved.size())
            throw ConfigError("checkpoint does not match the configured architecture");
        for (size_t i = 0; i < params.size(); ++i) {
            if (params[i].name != saved[i].first ||
                params[i].tensor.numel() != static_cast<int64_t>(saved[i].second.size()))
                throw ConfigError("checkpoint tensor '" + saved[i].first +
                                  "' does not match the configured architecture");
            params[i].tensor.raw_data() = saved[i].second;
        }
    };
    restore(pair.query_parameters(), ckpt.query_weights);
    restore(pair.key_parameters(), ckpt.key_weights);
    return pair;
}

} // namespace vssl
