#include "kforge/data.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kforge/errors.hpp"

namespace kforge {

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  const double n = double(x.rows());
  s.mean = x.colwise().mean();
  const Eigen::VectorXd var =
      ((x.rowwise() - s.mean.transpose()).array().square().colwise().sum() / n)
          .transpose();
  s.scale = var.array().sqrt();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j)
    if (!(s.scale[j] > 1e-12)) s.scale[j] = 1.0;
  return s;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Eigen::MatrixXd Standardizer::inverse(const Eigen::MatrixXd& x) const {
  return (x.array().rowwise() * scale.transpose().array()).matrix().rowwise() +
         mean.transpose();
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

DataMatrix read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError("'" + path + "': empty file");
  DataMatrix data;
  for (const auto& name : split_line(line)) data.columns.push_back(trim(name));
  const size_t d = data.columns.size();
  if (d == 0) throw InputError("'" + path + "': no columns");

  std::vector<double> cells;
  int nrows = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != d) {
      std::ostringstream msg;
      msg << "'" << path << "': row " << lineno << " has " << fields.size()
          << " fields, expected " << d;
      throw InputError(msg.str());
    }
    for (size_t j = 0; j < d; ++j) {
      const std::string f = trim(fields[j]);
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size() ||
          !std::isfinite(v)) {
        std::ostringstream msg;
        msg << "'" << path << "': row " << lineno << ", column '" << data.columns[j]
            << "' (index " << j + 1 << "): not a finite number: '" << f << "'";
        throw InputError(msg.str());
      }
      cells.push_back(v);
    }
    ++nrows;
  }
  data.values.resize(nrows, Eigen::Index(d));
  for (int i = 0; i < nrows; ++i)
    for (size_t j = 0; j < d; ++j) data.values(i, Eigen::Index(j)) = cells[i * d + j];
  return data;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp + "'");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw InputError("short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

void write_csv(const std::string& path, const DataMatrix& data) {
  if (size_t(data.values.cols()) != data.columns.size())
    throw InputError("write_csv: column name count mismatch");
  std::string out;
  for (size_t j = 0; j < data.columns.size(); ++j) {
    if (j) out += ',';
    out += data.columns[j];
  }
  out += '\n';
  char buf[64];
  for (int i = 0; i < data.rows(); ++i) {
    for (int j = 0; j < data.cols(); ++j) {
      if (j) out += ',';
      std::snprintf(buf, sizeof(buf), "%.17g", data.values(i, j));
      out += buf;
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace kforge
