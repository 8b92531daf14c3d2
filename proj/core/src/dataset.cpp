#include "msmsharp/dataset.hpp"

#include "msmsharp/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace msmsharp {

namespace {

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool is_missing_token(std::string_view cell) {
  static constexpr std::string_view tokens[] = {"", "NA", "na", "N/A", "NaN", "nan", "NAN", "null", "NULL"};
  return std::find(std::begin(tokens), std::end(tokens), cell) != std::end(tokens);
}

// Rows are counted from the first data row; lines include the header.
std::string where(std::size_t line, std::string_view column) {
  std::ostringstream os;
  os << "row " << line - 1 << " (line " << line << "), column '" << column << "'";
  return os.str();
}

double parse_cell(std::string_view cell, std::size_t line, std::string_view column) {
  cell = trim(cell);
  if (is_missing_token(cell)) {
    throw Error(ErrorCode::missing_value, "missing value at " + where(line, column));
  }
  std::string_view digits = cell;
  if (!digits.empty() && digits.front() == '+') digits.remove_prefix(1);
  double value = 0.0;
  const auto* first = digits.data();
  const auto* last = digits.data() + digits.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorCode::non_numeric_cell,
                "non-numeric cell '" + std::string(cell) + "' at " + where(line, column));
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::non_finite_value, "non-finite value at " + where(line, column));
  }
  return value;
}

void append_number(std::string& out, double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

Eigen::Index Dataset::n_treated() const noexcept {
  return static_cast<Eigen::Index>((treatment_.array() == 1.0).count());
}

std::vector<Eigen::Index> Dataset::arm_rows(int arm) const {
  std::vector<Eigen::Index> rows;
  const double level = arm == 1 ? 1.0 : 0.0;
  for (Eigen::Index i = 0; i < n(); ++i) {
    if (treatment_[i] == level) rows.push_back(i);
  }
  return rows;
}

Dataset Dataset::gather(std::span<const Eigen::Index> rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  RawDataset raw;
  raw.covariates.resize(m, d());
  raw.treatment.resize(m);
  raw.outcome.resize(m);
  raw.covariate_names = names_;
  if (known_propensity_) raw.known_propensity = Eigen::VectorXd(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = rows[static_cast<std::size_t>(r)];
    raw.covariates.row(r) = covariates_.row(i);
    raw.treatment[r] = treatment_[i];
    raw.outcome[r] = outcome_[i];
    if (known_propensity_) (*raw.known_propensity)[r] = (*known_propensity_)[i];
  }
  return validate_dataset(std::move(raw));
}

Dataset Dataset::with_outcome(Eigen::VectorXd outcome) const {
  RawDataset r = raw();
  r.outcome = std::move(outcome);
  return validate_dataset(std::move(r));
}

Dataset Dataset::with_covariates(Eigen::MatrixXd covariates, std::vector<std::string> names) const {
  RawDataset r = raw();
  r.covariates = std::move(covariates);
  r.covariate_names = std::move(names);
  return validate_dataset(std::move(r));
}

Dataset Dataset::without_known_propensity() const {
  Dataset copy = *this;
  copy.known_propensity_.reset();
  return copy;
}

RawDataset Dataset::raw() const {
  return RawDataset{covariates_, treatment_, outcome_, names_, known_propensity_};
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.n() != b.n() || a.d() != b.d()) return false;
  if (a.known_propensity_.has_value() != b.known_propensity_.has_value()) return false;
  if (a.known_propensity_ && *a.known_propensity_ != *b.known_propensity_) return false;
  return a.covariates_ == b.covariates_ && a.treatment_ == b.treatment_ &&
         a.outcome_ == b.outcome_ && a.names_ == b.names_;
}

Dataset validate_dataset(RawDataset raw) {
  const Eigen::Index n = raw.outcome.size();
  if (n < 2) {
    throw Error(ErrorCode::too_few_rows, "dataset needs at least 2 rows, got " + std::to_string(n));
  }
  if (raw.treatment.size() != n || raw.covariates.rows() != n) {
    throw Error(ErrorCode::dimension_mismatch, "covariates, treatment and outcome must have the same number of rows");
  }
  if (raw.covariates.cols() < 1) {
    throw Error(ErrorCode::no_covariates, "dataset needs at least one covariate");
  }
  if (raw.covariate_names.empty()) {
    for (Eigen::Index j = 0; j < raw.covariates.cols(); ++j) raw.covariate_names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(raw.covariate_names.size()) != raw.covariates.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "covariate_names length does not match covariate columns");
  }
  if (!raw.covariates.allFinite()) {
    throw Error(ErrorCode::non_finite_value, "covariates contain NaN or Inf");
  }
  if (!raw.outcome.allFinite()) {
    throw Error(ErrorCode::non_finite_value, "outcome contains NaN or Inf");
  }
  bool has0 = false;
  bool has1 = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = raw.treatment[i];
    if (z == 0.0) {
      has0 = true;
    } else if (z == 1.0) {
      has1 = true;
    } else {
      throw Error(ErrorCode::treatment_not_binary,
                  "treatment value at row " + std::to_string(i + 1) + " is not 0 or 1");
    }
  }
  if (!has0 || !has1) {
    throw Error(ErrorCode::single_treatment_level, "treatment has a single level");
  }
  if (raw.known_propensity) {
    const auto& p = *raw.known_propensity;
    if (p.size() != n) {
      throw Error(ErrorCode::dimension_mismatch, "known propensity length does not match rows");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(p[i] > 0.0 && p[i] < 1.0)) {
        throw Error(ErrorCode::propensity_out_of_range,
                    "propensity at row " + std::to_string(i + 1) + " is outside (0, 1)");
      }
    }
  }
  Dataset ds;
  ds.covariates_ = std::move(raw.covariates);
  ds.treatment_ = std::move(raw.treatment);
  ds.outcome_ = std::move(raw.outcome);
  ds.names_ = std::move(raw.covariate_names);
  ds.known_propensity_ = std::move(raw.known_propensity);
  return ds;
}

Dataset read_csv(std::istream& in, const CsvColumns& columns) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::empty_file, "CSV input is empty (header row required)");
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  std::vector<std::string> header;
  for (auto cell : split_row(line)) header.emplace_back(trim(cell));

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (!index.emplace(header[j], j).second) {
      throw Error(ErrorCode::duplicate_column, "duplicate column '" + header[j] + "' in header");
    }
  }
  auto require = [&](const std::string& name, const char* role) {
    const auto it = index.find(name);
    if (it == index.end()) {
      throw Error(ErrorCode::missing_column, std::string(role) + " column '" + name + "' not found in header");
    }
    return it->second;
  };
  const std::size_t y_col = require(columns.outcome, "outcome");
  const std::size_t z_col = require(columns.treatment, "treatment");
  std::optional<std::size_t> p_col;
  if (columns.propensity) p_col = require(*columns.propensity, "propensity");
  if (y_col == z_col || (p_col && (*p_col == y_col || *p_col == z_col))) {
    throw Error(ErrorCode::duplicate_column, "outcome, treatment and propensity must be distinct columns");
  }

  std::vector<std::size_t> x_cols;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j == y_col || j == z_col || (p_col && j == *p_col)) continue;
    x_cols.push_back(j);
    names.push_back(header[j]);
  }

  std::vector<double> x_values;
  std::vector<double> z_values;
  std::vector<double> y_values;
  std::vector<double> p_values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::ragged_row, "row " + std::to_string(line_no - 1) + " (line " + std::to_string(line_no) + ") has " +
                                             std::to_string(cells.size()) + " cells, header has " +
                                             std::to_string(header.size()));
    }
    for (const auto j : x_cols) x_values.push_back(parse_cell(cells[j], line_no, header[j]));
    const double z = parse_cell(cells[z_col], line_no, header[z_col]);
    if (z != 0.0 && z != 1.0) {
      throw Error(ErrorCode::treatment_not_binary, "treatment value outside {0,1} at " + where(line_no, header[z_col]));
    }
    z_values.push_back(z);
    y_values.push_back(parse_cell(cells[y_col], line_no, header[y_col]));
    if (p_col) {
      const double p = parse_cell(cells[*p_col], line_no, header[*p_col]);
      if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorCode::propensity_out_of_range, "propensity outside (0,1) at " + where(line_no, header[*p_col]));
      }
      p_values.push_back(p);
    }
  }

  const auto n = static_cast<Eigen::Index>(y_values.size());
  const auto d = static_cast<Eigen::Index>(x_cols.size());
  RawDataset raw;
  raw.covariates.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) raw.covariates(i, j) = x_values[static_cast<std::size_t>(i * d + j)];
  }
  raw.treatment = Eigen::Map<const Eigen::VectorXd>(z_values.data(), n);
  raw.outcome = Eigen::Map<const Eigen::VectorXd>(y_values.data(), n);
  raw.covariate_names = std::move(names);
  if (p_col) raw.known_propensity = Eigen::Map<const Eigen::VectorXd>(p_values.data(), n);
  return validate_dataset(std::move(raw));
}

Dataset load_csv(const std::filesystem::path& path, const CsvColumns& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::file_not_found, "cannot open '" + path.string() + "'");
  }
  return read_csv(in, columns);
}

void write_csv(std::ostream& out, const Dataset& ds, const CsvColumns& columns) {
  std::string buf;
  for (const auto& name : ds.covariate_names()) buf += name + ",";
  buf += columns.treatment + "," + columns.outcome;
  const bool with_p = ds.known_propensity().has_value();
  if (with_p) buf += "," + columns.propensity.value_or("propensity");
  buf += '\n';
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    for (Eigen::Index j = 0; j < ds.d(); ++j) {
      append_number(buf, ds.covariates()(i, j));
      buf += ',';
    }
    buf += ds.treated(i) ? '1' : '0';
    buf += ',';
    append_number(buf, ds.outcome()[i]);
    if (with_p) {
      buf += ',';
      append_number(buf, (*ds.known_propensity())[i]);
    }
    buf += '\n';
  }
  out << buf;
}

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd& covariates) const {
  Eigen::MatrixXd out = covariates;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    if (std::find(constant_columns.begin(), constant_columns.end(), j) != constant_columns.end()) continue;
    out.col(j) = (out.col(j).array() - means[j]) / sds[j];
  }
  return out;
}

Eigen::MatrixXd Standardization::invert(const Eigen::MatrixXd& standardized) const {
  Eigen::MatrixXd out = standardized;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    if (std::find(constant_columns.begin(), constant_columns.end(), j) != constant_columns.end()) continue;
    out.col(j) = out.col(j).array() * sds[j] + means[j];
  }
  return out;
}

std::pair<Dataset, Standardization> standardize_covariates(const Dataset& ds) {
  const auto& x = ds.covariates();
  const auto n = static_cast<double>(ds.n());
  Standardization s;
  s.means.resize(ds.d());
  s.sds.resize(ds.d());
  for (Eigen::Index j = 0; j < ds.d(); ++j) {
    const double mean = x.col(j).mean();
    const double ss = (x.col(j).array() - mean).square().sum();
    s.means[j] = mean;
    s.sds[j] = std::sqrt(ss / (n - 1.0));
    if (x.col(j).maxCoeff() == x.col(j).minCoeff() || !(s.sds[j] > 0.0)) {
      s.sds[j] = 0.0;
      s.constant_columns.push_back(j);
    }
  }
  Dataset out = ds.with_covariates(s.apply(x), ds.covariate_names());
  return {std::move(out), std::move(s)};
}

}  // namespace msmsharp
