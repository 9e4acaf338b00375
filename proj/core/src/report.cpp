#include "vssl/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "vssl/serialize.hpp"
#include "vssl/version.hpp"

namespace vssl {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open metrics log: " + path);
    std::string line;
    if (!std::getline(is, line))
        throw DataError(path + ":1: empty metrics log");
    if (line != MetricsRow::csv_header())
        throw DataError(path + ":1: unexpected metrics header");
    std::vector<MetricsRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        rows.push_back(MetricsRow::from_csv(line, lineno));
    }
    return rows;
}

namespace {

std::string config_hash_string(const TrainConfig& cfg) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                  static_cast<unsigned long long>(cfg.hash()));
    return buf;
}

// mean of a per-epoch slice; NaN-valued entries are skipped
double epoch_mean(const std::vector<MetricsRow>& rows, int epoch, double MetricsRow::* field) {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : rows) {
        if (r.epoch != epoch) continue;
        const double v = r.*field;
        if (std::isnan(v)) continue;
        sum += v;
        ++count;
    }
    return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

json nan_to_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

json load_optional_json(const std::string& dir, const std::string& name) {
    if (dir.empty()) return nullptr;
    const fs::path p = fs::path(dir) / name;
    std::ifstream is(p);
    if (!is) return nullptr;
    try {
        json j;
        is >> j;
        return j;
    } catch (const json::exception& e) {
        throw DataError(p.string() + ": " + e.what());
    }
}

} // namespace

std::string build_report_json(const TrainConfig& cfg, const ReportInputs& inputs) {
    json report;
    report["version"] = version_string();
    report["config_hash"] = config_hash_string(cfg);

    if (!inputs.metrics_csv_path.empty()) {
        const auto rows = read_metrics_csv(inputs.metrics_csv_path);
        if (rows.empty()) {
            report["pretrain"] = nullptr;
        } else {
            const int first_epoch = rows.front().epoch;
            const int last_epoch = rows.back().epoch;
            json p;
            p["steps"] = rows.size();
            p["first_epoch"] = first_epoch;
            p["final_epoch"] = last_epoch;
            p["loss_total_first_epoch"] = nan_to_null(epoch_mean(rows, first_epoch, &MetricsRow::loss_total));
            p["loss_total_final_epoch"] = nan_to_null(epoch_mean(rows, last_epoch, &MetricsRow::loss_total));
            p["nn_same_class_first_epoch"] =
                nan_to_null(epoch_mean(rows, first_epoch, &MetricsRow::nn_same_class_frac));
            p["nn_same_class_final_epoch"] =
                nan_to_null(epoch_mean(rows, last_epoch, &MetricsRow::nn_same_class_frac));
            report["pretrain"] = p;
        }
    } else {
        report["pretrain"] = nullptr;
    }

    report["probe"] = load_optional_json(inputs.eval_dir, "probe.json");
    report["retrieval"] = load_optional_json(inputs.eval_dir, "retrieval.json");
    report["fewshot"] = load_optional_json(inputs.eval_dir, "fewshot.json");
    report["nn_quality"] = load_optional_json(inputs.eval_dir, "nn_quality.json");
    report["cooccurrence"] = load_optional_json(inputs.eval_dir, "cooccurrence.json");

    return report.dump(2) + "\n";
}

void write_report(const TrainConfig& cfg, const ReportInputs& inputs, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const std::string text = build_report_json(cfg, inputs);
    {
        std::ofstream os(fs::path(out_dir) / "report.json", std::ios::binary);
        if (!os) throw DataError("cannot write report.json in " + out_dir);
        os << text;
    }
    if (inputs.metrics_csv_path.empty()) return;
    const auto rows = read_metrics_csv(inputs.metrics_csv_path);
    fs::create_directories(fs::path(out_dir) / "curves");
    const auto write_curve = [&](const std::string& name, double MetricsRow::* field) {
        std::ofstream os(fs::path(out_dir) / "curves" / name, std::ios::binary);
        if (!os) throw DataError("cannot write curve " + name);
        os << "step,value\n";
        for (const auto& r : rows) {
            const double v = r.*field;
            if (std::isnan(v)) continue;
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%lld,%.17g", static_cast<long long>(r.step), v);
            os << buf << "\n";
        }
    };
    write_curve("loss_total.csv", &MetricsRow::loss_total);
    write_curve("loss_intra.csv", &MetricsRow::loss_intra);
    write_curve("loss_nn.csv", &MetricsRow::loss_nn);
    write_curve("lr.csv", &MetricsRow::lr);
    write_curve("momentum.csv", &MetricsRow::m);
    write_curve("nn_same_class.csv", &MetricsRow::nn_same_class_frac);
}

} // namespace vssl
