#ifndef KFORGE_DATA_HPP
#define KFORGE_DATA_HPP

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kforge {

struct DataMatrix {
  Eigen::MatrixXd values;  // N x d
  std::vector<std::string> columns;

  int rows() const { return int(values.rows()); }
  int cols() const { return int(values.cols()); }
};

struct Dataset {
  DataMatrix x;
  Eigen::VectorXd y;
  bool has_y = false;
  bool binary_y = false;
  std::vector<int> truth;  // indices of the important features, if known
  Eigen::VectorXd alpha;   // synthetic linear response coefficients, if any
  std::vector<int> mixture_component;  // per-row component labels, if any
};

// Per-column affine map fitted on training data. Constant columns get unit
// scale so the transform stays invertible.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& x) const;
};

// Strict headered CSV: UTF-8, '.' decimal, no missing values. Parse
// failures carry the offending row and column in the message.
DataMatrix read_csv(const std::string& path);

// Atomic write (temp file then rename), %.17g formatting.
void write_csv(const std::string& path, const DataMatrix& data);

// Atomic write of arbitrary bytes.
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace kforge

#endif
