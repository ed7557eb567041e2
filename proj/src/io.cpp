#include "mgpatree/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mgpatree/errors.hpp"
#include "mgpatree/mvtree.hpp"

namespace mgpa {

namespace fs = std::filesystem;

namespace {

// Values above 1 by less than this are treated as rounding and clamped.
constexpr double kUpperSlack = 1e-9;

std::string at_line(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

void append_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += '\t';
    out += fields[i];
  }
  out += '\n';
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string declaration_column(const Declaration& decl, const std::string& target) {
  return to_string(decl.rule) + "_" + format_double(decl.level) + "_" + target;
}

nlohmann::json declarations_json(const PrioritizationReport& report) {
  auto out = nlohmann::json::array();
  for (const auto& decl : report.declarations) {
    nlohmann::json counts;
    for (std::size_t t = 0; t < report.targets.size(); ++t) counts[report.target_names[t]] = decl.counts[t];
    out.push_back({{"rule", to_string(decl.rule)}, {"level", decl.level}, {"counts", counts}});
  }
  return out;
}

std::vector<std::string> annotation_names_at(const std::vector<std::string>& names,
                                             const std::vector<int>& indices) {
  std::vector<std::string> out;
  for (int k : indices) out.push_back(names.at(static_cast<std::size_t>(k)));
  return out;
}

void append_summary_rows(std::string& out, const std::string& model, const PrioritizationReport& report,
                         const std::vector<std::string>& selected) {
  for (const auto& decl : report.declarations) {
    std::vector<std::string> row{model, to_string(decl.rule), format_double(decl.level)};
    for (std::size_t count : decl.counts) row.push_back(std::to_string(count));
    row.push_back(join(selected, ","));
    append_row(out, row);
  }
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, result.ptr);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto result = std::from_chars(first, last, value);
  if (result.ec != std::errc() || result.ptr != last) {
    throw DataError("not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.emplace_back(line.substr(start, tab == std::string_view::npos ? line.npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

std::optional<std::size_t> Table::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::column(std::string_view name) const {
  if (auto idx = find_column(name)) return *idx;
  throw FormatError("missing column '" + std::string(name) + "'");
}

Table read_table(const fs::path& path, std::string_view first_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Table table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (!have_header) {
      if (fields.front() != first_column) {
        throw FormatError(at_line(path, line_no) + ": expected header starting with '" +
                          std::string(first_column) + "'");
      }
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw FormatError(at_line(path, line_no) + ": expected " + std::to_string(table.header.size()) +
                        " fields, found " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw FormatError(path.string() + ": missing header");
  return table;
}

void write_text(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
  if (!out) throw IoError("write failed for " + path.string());
}

PValuePanel load_gwas(const fs::path& path) {
  Table table = read_table(path);
  if (table.header.size() < 2) throw FormatError(path.string() + ": no trait columns");
  if (table.rows.empty()) throw DataError(path.string() + ": no SNP rows");
  std::vector<std::string> traits(table.header.begin() + 1, table.header.end());
  const auto m = static_cast<Eigen::Index>(table.rows.size());
  const auto d = static_cast<Eigen::Index>(traits.size());
  Matrix values(m, d);
  std::vector<std::string> ids;
  ids.reserve(table.rows.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    auto& row = table.rows[static_cast<std::size_t>(i)];
    const std::size_t line = table.line_numbers[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d; ++j) {
      double p = 0.0;
      try {
        p = parse_double(row[static_cast<std::size_t>(j + 1)]);
      } catch (const DataError& e) {
        throw DataError(at_line(path, line) + ": " + e.what());
      }
      if (!(p >= 0.0 && p <= 1.0 + kUpperSlack)) {
        throw DataError(at_line(path, line) + ": p-value " + row[static_cast<std::size_t>(j + 1)] +
                        " outside [0, 1]");
      }
      values(i, j) = PValuePanel::clamp(p);
    }
    ids.push_back(std::move(row[0]));
  }
  return PValuePanel(std::move(ids), std::move(traits), std::move(values));
}

void write_gwas(const PValuePanel& panel, const fs::path& path) {
  std::string out;
  std::vector<std::string> header{"snp_id"};
  header.insert(header.end(), panel.trait_names().begin(), panel.trait_names().end());
  append_row(out, header);
  for (std::size_t i = 0; i < panel.snps(); ++i) {
    out += panel.snp_ids()[i];
    for (int d = 0; d < panel.traits(); ++d) {
      out += '\t';
      out += format_double(panel.values()(static_cast<Eigen::Index>(i), d));
    }
    out += '\n';
  }
  write_text(path, out);
}

AnnotationPanel load_annotations(const fs::path& path, std::optional<double> threshold) {
  Table table = read_table(path);
  if (table.header.size() < 2) throw FormatError(path.string() + ": no annotation columns");
  std::vector<std::string> names(table.header.begin() + 1, table.header.end());
  const auto m = static_cast<Eigen::Index>(table.rows.size());
  const auto k = static_cast<Eigen::Index>(names.size());
  BinaryMatrix values(m, k);
  std::vector<std::string> ids;
  ids.reserve(table.rows.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    auto& row = table.rows[static_cast<std::size_t>(i)];
    const std::size_t line = table.line_numbers[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < k; ++j) {
      const std::string& field = row[static_cast<std::size_t>(j + 1)];
      double score = 0.0;
      try {
        score = parse_double(field);
      } catch (const DataError& e) {
        throw DataError(at_line(path, line) + ": " + e.what());
      }
      if (threshold) {
        values(i, j) = score >= *threshold ? 1 : 0;
      } else if (score == 0.0 || score == 1.0) {
        values(i, j) = static_cast<std::uint8_t>(score);
      } else {
        throw DataError(at_line(path, line) + ": non-binary annotation '" + field +
                        "' (supply a threshold to binarize scores)");
      }
    }
    ids.push_back(std::move(row[0]));
  }
  return AnnotationPanel(std::move(ids), std::move(names), std::move(values));
}

void write_annotations(const AnnotationPanel& panel, const fs::path& path) {
  std::string out;
  std::vector<std::string> header{"snp_id"};
  header.insert(header.end(), panel.names().begin(), panel.names().end());
  append_row(out, header);
  for (std::size_t i = 0; i < panel.snps(); ++i) {
    out += panel.snp_ids()[i];
    for (int k = 0; k < panel.annotations(); ++k) {
      out += panel.values()(static_cast<Eigen::Index>(i), k) ? "\t1" : "\t0";
    }
    out += '\n';
  }
  write_text(path, out);
}

void write_fit_report(const FitReport& report, const fs::path& dir) {
  const FitResult& fit = report.fit;
  const PrioritizationReport& prio = report.prioritization;
  const PValuePanel& gwas = report.gwas;
  const StateSpace space(gwas.traits());
  const auto states = space.labels();
  if (prio.snp_ids.size() != gwas.snps() || fit.posteriors.rows() != gwas.snps()) {
    throw ShapeError("fit report inputs differ in SNP count");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const auto selected = selected_annotations(fit.tree);
  const auto& names = fit.tree.annotation_names();

  nlohmann::json summary;
  summary["snps"] = gwas.snps();
  summary["traits"] = gwas.trait_names();
  summary["states"] = states;
  summary["annotations"] = names;
  summary["alpha"] = fit.params.alpha();
  summary["loglik"] = fit.loglik();
  summary["converged"] = fit.converged();
  summary["stage1"] = {
      {"iterations", fit.stage1.iterations},
      {"stop", to_string(fit.stage1.stop)},
      {"dropped_annotations", annotation_names_at(names, fit.stage1.dropped_annotations)},
      {"zero_weight_traits", fit.stage1.zero_weight_traits},
      {"monotonicity_violations", fit.stage1.monotonicity_violations}};
  summary["stage2"] = {{"accepted", fit.stage2_accepted},
                       {"rejected", fit.stage2_rejected},
                       {"stop", to_string(fit.stage2_stop)},
                       {"first_tree_improved", fit.first_tree_improved}};
  summary["tree"] = fit.tree.to_json();
  summary["leaves"] = fit.tree.leaf_count();
  summary["selected_annotations"] = selected;
  summary["targets"] = prio.target_names;
  summary["declarations"] = declarations_json(prio);
  if (report.baseline) {
    const Vector prior = report.baseline->priors.values().row(0).transpose();
    nlohmann::json base;
    base["alpha"] = report.baseline->params.alpha();
    base["loglik"] = report.baseline->loglik();
    base["converged"] = report.baseline->converged();
    base["priors"] = std::vector<double>(prior.data(), prior.data() + prior.size());
    if (report.baseline_prioritization) base["declarations"] = declarations_json(*report.baseline_prioritization);
    summary["baseline"] = base;
  }
  summary["config"] = report.config;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  {
    std::string out;
    std::vector<std::string> header{"model", "rule", "level"};
    for (std::size_t t = 0; t < prio.targets.size(); ++t) {
      const bool joint = prio.targets[t].kind == FdrTarget::Kind::kJoint;
      header.push_back((joint ? "joint_" : "marginal_") + prio.target_names[t]);
    }
    header.push_back("selected_annotations");
    append_row(out, header);
    append_summary_rows(out, "multi_gpa_tree", prio, selected);
    if (report.baseline_prioritization) append_summary_rows(out, "baseline", *report.baseline_prioritization, {});
    write_text(dir / "summary.tsv", out);
  }

  write_text(dir / "tree.txt", fit.tree.to_text());

  {
    std::string out;
    std::vector<std::string> header{"snp_id"};
    for (const auto& s : states) header.push_back("prior_" + s);
    for (const auto& s : states) header.push_back("post_" + s);
    for (const auto& t : prio.target_names) header.push_back("fdr_" + t);
    for (const auto& decl : prio.declarations) {
      for (const auto& t : prio.target_names) header.push_back(declaration_column(decl, t));
    }
    const PrioritizationReport* base = report.baseline_prioritization;
    if (base) {
      for (const auto& t : base->target_names) header.push_back("baseline_fdr_" + t);
    }
    append_row(out, header);
    for (std::size_t i = 0; i < gwas.snps(); ++i) {
      out += gwas.snp_ids()[i];
      for (int l = 0; l < space.size(); ++l) (out += '\t') += format_double(fit.priors(i, l));
      for (int l = 0; l < space.size(); ++l) (out += '\t') += format_double(fit.posteriors(i, l));
      for (const auto& fdr : prio.fdr) (out += '\t') += format_double(fdr[i]);
      for (const auto& decl : prio.declarations) {
        for (const auto& flags : decl.flags) out += flags[i] ? "\t1" : "\t0";
      }
      if (base) {
        for (const auto& fdr : base->fdr) (out += '\t') += format_double(fdr[i]);
      }
      out += '\n';
    }
    write_text(dir / "snps.tsv", out);
  }

  {
    std::string out;
    std::vector<std::string> header{"model", "stage", "iteration", "loglik"};
    for (const auto& t : gwas.trait_names()) header.push_back("alpha_" + t);
    header.push_back("accepted");
    append_row(out, header);
    auto emit = [&](const std::string& model, const std::vector<TraceEntry>& trace) {
      for (const auto& e : trace) {
        std::vector<std::string> row{model, std::to_string(e.stage), std::to_string(e.iteration),
                                     format_double(e.loglik)};
        for (double a : e.alpha) row.push_back(format_double(a));
        row.push_back(e.accepted ? "1" : "0");
        append_row(out, row);
      }
    };
    emit("multi_gpa_tree", fit.trace);
    if (report.baseline) emit("baseline", report.baseline->trace);
    write_text(dir / "trace.tsv", out);
  }
}

LoadedFit load_fit_report(const fs::path& dir) {
  LoadedFit fit;
  nlohmann::json summary;
  {
    std::ifstream in(dir / "summary.json");
    if (!in) throw IoError("cannot open " + (dir / "summary.json").string());
    try {
      in >> summary;
      fit.trait_names = summary.at("traits").get<std::vector<std::string>>();
      fit.alpha = summary.at("alpha").get<std::vector<double>>();
      fit.selected_annotations = summary.at("selected_annotations").get<std::vector<std::string>>();
      fit.target_names = summary.at("targets").get<std::vector<std::string>>();
      if (summary.contains("baseline")) {
        fit.has_baseline = true;
        fit.baseline_alpha = summary["baseline"].at("alpha").get<std::vector<double>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError((dir / "summary.json").string() + ": " + e.what());
    }
  }

  const Table table = read_table(dir / "snps.tsv");
  const StateSpace space(static_cast<int>(fit.trait_names.size()));
  std::vector<std::size_t> post_cols;
  for (const auto& s : space.labels()) post_cols.push_back(table.column("post_" + s));
  std::vector<std::size_t> fdr_cols, base_cols;
  for (const auto& t : fit.target_names) {
    fdr_cols.push_back(table.column("fdr_" + t));
    if (fit.has_baseline) base_cols.push_back(table.column("baseline_fdr_" + t));
  }
  const std::size_t m = table.rows.size();
  fit.posteriors.resize(static_cast<Eigen::Index>(m), space.size());
  fit.fdr.assign(fdr_cols.size(), std::vector<double>(m));
  fit.baseline_fdr.assign(base_cols.size(), std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto& row = table.rows[i];
    fit.snp_ids.push_back(row[0]);
    for (std::size_t l = 0; l < post_cols.size(); ++l) {
      fit.posteriors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = parse_double(row[post_cols[l]]);
    }
    for (std::size_t t = 0; t < fdr_cols.size(); ++t) fit.fdr[t][i] = parse_double(row[fdr_cols[t]]);
    for (std::size_t t = 0; t < base_cols.size(); ++t) fit.baseline_fdr[t][i] = parse_double(row[base_cols[t]]);
  }
  return fit;
}

}  // namespace mgpa
