#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mgpatree/em.hpp"
#include "mgpatree/fdr.hpp"
#include "mgpatree/model.hpp"

namespace mgpa {

// Tab-separated text with a header row. Values are printed in the shortest
// form that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);
std::vector<std::string> split_tabs(std::string_view line);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::size_t column(std::string_view name) const;  // throws FormatError if absent
  std::optional<std::size_t> find_column(std::string_view name) const;
};

// Reads a TSV whose first header field must be `first_column`.
Table read_table(const std::filesystem::path& path, std::string_view first_column = "snp_id");

void write_text(const std::filesystem::path& path, const std::string& contents);

PValuePanel load_gwas(const std::filesystem::path& path);
void write_gwas(const PValuePanel& panel, const std::filesystem::path& path);

// Without a threshold entries must be exactly 0 or 1; with one, a score s
// becomes 1 iff s >= threshold.
AnnotationPanel load_annotations(const std::filesystem::path& path,
                                 std::optional<double> threshold = std::nullopt);
void write_annotations(const AnnotationPanel& panel, const std::filesystem::path& path);

struct FitReport {
  const FitResult& fit;
  const PrioritizationReport& prioritization;
  const PValuePanel& gwas;
  const FitResult* baseline = nullptr;
  const PrioritizationReport* baseline_prioritization = nullptr;
  nlohmann::json config = nlohmann::json::object();
};

// Writes summary.json, summary.tsv, tree.txt, snps.tsv and trace.tsv under `dir`.
void write_fit_report(const FitReport& report, const std::filesystem::path& dir);

struct LoadedFit {
  std::vector<std::string> snp_ids;
  std::vector<std::string> trait_names;
  std::vector<double> alpha;
  std::vector<std::string> selected_annotations;
  Matrix posteriors;
  std::vector<std::string> target_names;
  std::vector<std::vector<double>> fdr;  // per target
  bool has_baseline = false;
  std::vector<double> baseline_alpha;
  std::vector<std::vector<double>> baseline_fdr;
};

LoadedFit load_fit_report(const std::filesystem::path& dir);

}  // namespace mgpa
