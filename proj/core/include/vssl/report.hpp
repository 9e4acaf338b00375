#pragma once

#include <string>
#include <vector>

#include "vssl/config.hpp"
#include "vssl/trainer.hpp"

namespace vssl {

// Inputs the report aggregates. Every field is optional; missing sections
// appear as explicit nulls in the JSON summary.
struct ReportInputs {
    std::string metrics_csv_path;          // empty = no pretraining section
    std::string eval_dir;                  // scanned for the eval json files below
};

// Parses a metrics.csv (strict header and field checks; parse failures name
// the line). Returns the rows in file order.
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// Builds the summary JSON text (sorted keys, 2-space indent, trailing
// newline). Byte-stable for identical inputs: no timestamps, the version
// string is a build constant and the config hash is content-derived.
std::string build_report_json(const TrainConfig& cfg, const ReportInputs& inputs);

// Writes report.json plus per-curve CSVs (curves/loss_total.csv, lr.csv,
// momentum.csv, nn_same_class.csv) under out_dir.
void write_report(const TrainConfig& cfg, const ReportInputs& inputs, const std::string& out_dir);

} // namespace vssl
