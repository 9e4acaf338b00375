#include "vssl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vssl/serialize.hpp"

namespace vssl {

const char* to_string(TrainerMode mode) {
    return mode == TrainerMode::momentum ? "momentum" : "non_momentum";
}

TrainerMode trainer_mode_from_string(const std::string& s) {
    if (s == "momentum") return TrainerMode::momentum;
    if (s == "non_momentum") return TrainerMode::non_momentum;
    throw ConfigError("mode must be 'momentum' or 'non_momentum', got '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<int>(x);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<uint64_t>(x);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& v, Parse parse) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("config key '" + key + "': empty list element");
        out.push_back(parse(key, item));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::string fmt_double(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

} // namespace

TrainConfig TrainConfig::from_text(const std::string& text) {
    TrainConfig cfg;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"epochs", [&](const std::string& k, const std::string& v) { cfg.epochs = parse_int(k, v); }},
        {"batch_size", [&](const std::string& k, const std::string& v) { cfg.batch_size = parse_int(k, v); }},
        {"base_lr", [&](const std::string& k, const std::string& v) { cfg.base_lr = parse_double(k, v); }},
        {"warmup_epochs", [&](const std::string& k, const std::string& v) { cfg.warmup_epochs = parse_int(k, v); }},
        {"sgd_momentum", [&](const std::string& k, const std::string& v) { cfg.sgd_momentum = parse_double(k, v); }},
        {"weight_decay", [&](const std::string& k, const std::string& v) { cfg.weight_decay = parse_double(k, v); }},
        {"temperature", [&](const std::string& k, const std::string& v) { cfg.temperature = parse_double(k, v); }},
        {"lambda_intra", [&](const std::string& k, const std::string& v) { cfg.lambda_intra = parse_double(k, v); }},
        {"lambda_nn", [&](const std::string& k, const std::string& v) { cfg.lambda_nn = parse_double(k, v); }},
        {"queue_capacity", [&](const std::string& k, const std::string& v) { cfg.queue_capacity = parse_int(k, v); }},
        {"min_nn_pool", [&](const std::string& k, const std::string& v) { cfg.min_nn_pool = parse_int(k, v); }},
        {"momentum_init", [&](const std::string& k, const std::string& v) { cfg.momentum_init = parse_double(k, v); }},
        {"mode", [&](const std::string&, const std::string& v) { cfg.mode = trainer_mode_from_string(v); }},
        {"seed", [&](const std::string& k, const std::string& v) { cfg.seed = parse_u64(k, v); }},
        {"checkpoint_interval",
         [&](const std::string& k, const std::string& v) { cfg.checkpoint_interval = parse_int(k, v); }},
        {"n_videos", [&](const std::string& k, const std::string& v) { cfg.n_videos = parse_int(k, v); }},
        {"n_classes", [&](const std::string& k, const std::string& v) { cfg.n_classes = parse_int(k, v); }},
        {"total_frames", [&](const std::string& k, const std::string& v) { cfg.total_frames = parse_int(k, v); }},
        {"canvas_size", [&](const std::string& k, const std::string& v) { cfg.canvas_size = parse_int(k, v); }},
        {"clip_len", [&](const std::string& k, const std::string& v) { cfg.clip_len = parse_int(k, v); }},
        {"crop_size", [&](const std::string& k, const std::string& v) { cfg.crop_size = parse_int(k, v); }},
        {"conv_channels",
         [&](const std::string& k, const std::string& v) { cfg.conv_channels = parse_list<int>(k, v, parse_int); }},
        {"head_hidden", [&](const std::string& k, const std::string& v) { cfg.head_hidden = parse_int(k, v); }},
        {"embed_dim", [&](const std::string& k, const std::string& v) { cfg.embed_dim = parse_int(k, v); }},
        {"test_fraction", [&](const std::string& k, const std::string& v) { cfg.test_fraction = parse_double(k, v); }},
        {"probe_epochs", [&](const std::string& k, const std::string& v) { cfg.probe_epochs = parse_int(k, v); }},
        {"probe_lr", [&](const std::string& k, const std::string& v) { cfg.probe_lr = parse_double(k, v); }},
        {"fewshot_fractions",
         [&](const std::string& k, const std::string& v) {
             cfg.fewshot_fractions = parse_list<double>(k, v, parse_double);
         }},
        {"retrieval_ks",
         [&](const std::string& k, const std::string& v) { cfg.retrieval_ks = parse_list<int>(k, v, parse_int); }},
    };

    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end())
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (value.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty value for '" + key + "'");
        it->second(key, value);
    }
    cfg.validate();
    return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    return from_text(buffer.str());
}

std::string TrainConfig::canonical_text() const {
    std::ostringstream os;
    os << "base_lr = " << fmt_double(base_lr) << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "canvas_size = " << canvas_size << "\n";
    os << "checkpoint_interval = " << checkpoint_interval << "\n";
    os << "clip_len = " << clip_len << "\n";
    os << "conv_channels = " << join(conv_channels) << "\n";
    os << "crop_size = " << crop_size << "\n";
    os << "embed_dim = " << embed_dim << "\n";
    os << "epochs = " << epochs << "\n";
    os << "fewshot_fractions = " << join(fewshot_fractions) << "\n";
    os << "head_hidden = " << head_hidden << "\n";
    os << "lambda_intra = " << fmt_double(lambda_intra) << "\n";
    os << "lambda_nn = " << fmt_double(lambda_nn) << "\n";
    os << "min_nn_pool = " << min_nn_pool << "\n";
    os << "mode = " << to_string(mode) << "\n";
    os << "momentum_init = " << fmt_double(momentum_init) << "\n";
    os << "n_classes = " << n_classes << "\n";
    os << "n_videos = " << n_videos << "\n";
    os << "probe_epochs = " << probe_epochs << "\n";
    os << "probe_lr = " << fmt_double(probe_lr) << "\n";
    os << "queue_capacity = " << queue_capacity << "\n";
    os << "retrieval_ks = " << join(retrieval_ks) << "\n";
    os << "seed = " << seed << "\n";
    os << "sgd_momentum = " << fmt_double(sgd_momentum) << "\n";
    os << "temperature = " << fmt_double(temperature) << "\n";
    os << "test_fraction = " << fmt_double(test_fraction) << "\n";
    os << "total_frames = " << total_frames << "\n";
    os << "warmup_epochs = " << warmup_epochs << "\n";
    os << "weight_decay = " << fmt_double(weight_decay) << "\n";
    return os.str();
}

uint64_t TrainConfig::hash() const { return fnv1a(canonical_text()); }

void TrainConfig::validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (warmup_epochs < 0 || warmup_epochs >= epochs)
        throw ConfigError("warmup_epochs must satisfy 0 <= warmup_epochs < epochs");
    if (base_lr <= 0.0) throw ConfigError("base_lr must be positive");
    if (sgd_momentum < 0.0 || sgd_momentum >= 1.0)
        throw ConfigError("sgd_momentum must lie in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    loss_weights().validate();
    if (queue_capacity <= 0) throw ConfigError("queue_capacity must be positive");
    if (min_nn_pool < 1 || min_nn_pool > queue_capacity)
        throw ConfigError("min_nn_pool must lie in [1, queue_capacity]");
    if (momentum_init < 0.0 || momentum_init >= 1.0)
        throw ConfigError("momentum_init must lie in [0,1)");
    if (checkpoint_interval <= 0) throw ConfigError("checkpoint_interval must be positive");
    if (batch_size > n_videos) throw ConfigError("batch_size exceeds n_videos");
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw ConfigError("test_fraction must lie in (0,1)");
    if (probe_epochs <= 0) throw ConfigError("probe_epochs must be positive");
    if (probe_lr <= 0.0) throw ConfigError("probe_lr must be positive");
    for (double f : fewshot_fractions)
        if (f <= 0.0 || f > 1.0) throw ConfigError("fewshot fractions must lie in (0,1]");
    for (size_t i = 0; i < retrieval_ks.size(); ++i) {
        if (retrieval_ks[i] <= 0) throw ConfigError("retrieval ks must be positive");
        if (i > 0 && retrieval_ks[i] <= retrieval_ks[i - 1])
            throw ConfigError("retrieval ks must be strictly increasing");
    }
    data_config();     // validates divisibility and clip geometry
    encoder_config().validate();
}

DataConfig TrainConfig::data_config() const {
    DataConfig d;
    d.n_videos = n_videos;
    d.n_classes = n_classes;
    d.total_frames = total_frames;
    d.canvas = canvas_size;
    d.clip_len = clip_len;
    d.crop = crop_size;
    d.seed = seed;
    if (n_videos % n_classes != 0)
        throw ConfigError("n_videos must be divisible by n_classes for balanced classes");
    if (clip_len > total_frames) throw ConfigError("clip_len exceeds total_frames");
    if (crop_size > canvas_size) throw ConfigError("crop_size exceeds canvas_size");
    class_grid(n_classes);
    return d;
}

EncoderConfig TrainConfig::encoder_config() const {
    EncoderConfig e;
    e.in_channels = 1;
    e.clip_len = clip_len;
    e.clip_height = crop_size;
    e.clip_width = crop_size;
    e.conv_channels = conv_channels;
    e.head_hidden = head_hidden;
    e.embed_dim = embed_dim;
    return e;
}

LossWeights TrainConfig::loss_weights() const {
    LossWeights w;
    w.lambda_intra = lambda_intra;
    w.lambda_nn = lambda_nn;
    w.temperature = temperature;
    return w;
}

} // namespace vssl
