#include "idbr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "idbr/io.hpp"
#include "idbr/optimizer.hpp"

namespace idbr {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void AccuracyMatrix::append_row(std::vector<double> row) {
  for (double v : row) {
    if (v < 0.0 || v > 1.0) {
      throw std::invalid_argument("AccuracyMatrix: accuracy outside [0, 1]");
    }
  }
  rows_.push_back(std::move(row));
}

const std::vector<double>& AccuracyMatrix::row(int index) const {
  if (index < 0 || index >= num_rows()) {
    throw std::out_of_range("AccuracyMatrix: row " + std::to_string(index));
  }
  return rows_[static_cast<size_t>(index)];
}

double AccuracyMatrix::at(int row_index, int col) const {
  const auto& r = row(row_index);
  if (col < 0 || col >= static_cast<int>(r.size())) {
    throw std::out_of_range("AccuracyMatrix: entry (" +
                            std::to_string(row_index) + ", " +
                            std::to_string(col) + ") is not defined");
  }
  return r[static_cast<size_t>(col)];
}

std::string AccuracyMatrix::to_csv() const {
  std::string out;
  for (const auto& row : rows_) {
    for (size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += format_double(row[j]);
    }
    out += '\n';
  }
  return out;
}

AccuracyMatrix AccuracyMatrix::from_csv(const std::string& csv) {
  AccuracyMatrix m;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      row.push_back(std::stod(field));
    }
    m.append_row(std::move(row));
  }
  return m;
}

double average_accuracy(const AccuracyMatrix& matrix, int after_task) {
  if (after_task < 1 || after_task > matrix.num_rows()) {
    throw std::out_of_range("average_accuracy: no row for task " +
                            std::to_string(after_task));
  }
  const auto& row = matrix.row(after_task - 1);
  if (row.empty()) throw std::invalid_argument("average_accuracy: empty row");
  double sum = 0.0;
  for (double v : row) sum += v;
  return sum / static_cast<double>(row.size());
}

double forgetting(const AccuracyMatrix& matrix, int after_task) {
  if (after_task < 2) {
    throw std::invalid_argument(
        "forgetting: needs at least two trained tasks");
  }
  if (after_task > matrix.num_rows()) {
    throw std::out_of_range("forgetting: no row for task " +
                            std::to_string(after_task));
  }
  const int k = after_task;  // 1-based
  double sum = 0.0;
  for (int j = 1; j <= k - 1; ++j) {
    // Peak over the rows where task j has been evaluated (l >= j).
    double peak = matrix.at(j - 1, j - 1);
    for (int l = j + 1; l <= k - 1; ++l) {
      peak = std::max(peak, matrix.at(l - 1, j - 1));
    }
    sum += peak - matrix.at(k - 1, j - 1);
  }
  return sum / static_cast<double>(k - 1);
}

double evaluate(const Model& model, std::span<const Example> test_set,
                const EvalOptions& options) {
  if (test_set.empty()) {
    throw std::invalid_argument("evaluate: empty test set");
  }
  int begin = 0;
  int end = model.config().num_classes;
  if (options.mask_to_task_block) {
    begin = options.block_offset;
    end = options.block_offset + options.block_size;
    if (begin < 0 || end > model.config().num_classes || begin >= end) {
      throw std::invalid_argument("evaluate: label block outside head range");
    }
  }

  size_t correct = 0;
  for (const Example& ex : test_set) {
    const Representations rep = model.represent(ex.tokens);
    const Eigen::VectorXd logits = model.class_logits(rep.generic, rep.specific);
    int arg = begin;
    for (int c = begin + 1; c < end; ++c) {
      if (logits(c) > logits(arg)) arg = c;
    }
    if (arg == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

namespace {

double probe_accuracy(const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                      const Eigen::MatrixXd& x, const std::vector<int>& y,
                      const std::vector<size_t>& indices) {
  if (indices.empty()) return 0.0;
  size_t correct = 0;
  for (size_t i : indices) {
    Eigen::VectorXd logits = w * x.row(i).transpose() + b;
    Eigen::Index arg = 0;
    logits.maxCoeff(&arg);
    if (static_cast<int>(arg) == y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace

ProbeResult fit_linear_probe(const Eigen::MatrixXd& features,
                             const std::vector<int>& labels, int num_classes,
                             uint64_t split_seed) {
  const Eigen::Index n = features.rows();
  if (n < 5) {
    throw std::invalid_argument("fit_linear_probe: need at least 5 examples");
  }
  if (static_cast<size_t>(n) != labels.size()) {
    throw std::invalid_argument("fit_linear_probe: feature/label size mismatch");
  }

  Rng rng(split_seed);
  const std::vector<size_t> order = rng.permutation(static_cast<size_t>(n));
  const size_t train_count = (static_cast<size_t>(n) * 4) / 5;
  std::vector<size_t> train(order.begin(), order.begin() + train_count);
  std::vector<size_t> holdout(order.begin() + train_count, order.end());

  const Eigen::Index d = features.cols();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(num_classes, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(num_classes);
  Eigen::MatrixXd mw = w, vw = w;
  Eigen::VectorXd mb = b, vb = b;

  const double lr = 0.05, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const int max_iterations = 800;
  const double inv_train = 1.0 / static_cast<double>(train.size());

  for (int iter = 1; iter <= max_iterations; ++iter) {
    Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(num_classes, d);
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(num_classes);
    for (size_t i : train) {
      Eigen::VectorXd logits = w * features.row(i).transpose() + b;
      Eigen::VectorXd p = softmax(logits);
      p(labels[i]) -= 1.0;
      gw.noalias() += inv_train * p * features.row(i);
      gb += inv_train * p;
    }
    const double grad_norm =
        std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff());
    if (grad_norm < 1e-7) break;

    const double c1 = 1.0 - std::pow(beta1, iter);
    const double c2 = 1.0 - std::pow(beta2, iter);
    mw = beta1 * mw + (1.0 - beta1) * gw;
    vw = beta2 * vw + (1.0 - beta2) * gw.cwiseProduct(gw);
    mb = beta1 * mb + (1.0 - beta1) * gb;
    vb = beta2 * vb + (1.0 - beta2) * gb.cwiseProduct(gb);
    w.array() -= lr * (mw.array() / c1) /
                 ((vw.array() / c2).sqrt() + eps);
    b.array() -= lr * (mb.array() / c1) /
                 ((vb.array() / c2).sqrt() + eps);
  }

  ProbeResult result;
  result.train_accuracy = probe_accuracy(w, b, features, labels, train);
  result.holdout_accuracy = probe_accuracy(w, b, features, labels, holdout);
  return result;
}

double probe_disentanglement(const Model& model,
                             std::span<const Example> examples, RegSpace space,
                             uint64_t seed) {
  if (space == RegSpace::kCombined) {
    throw std::invalid_argument(
        "probe_disentanglement: probe one space at a time");
  }
  std::set<int> tasks;
  for (const Example& ex : examples) tasks.insert(ex.task_id);
  if (tasks.size() < 2) {
    throw std::invalid_argument(
        "probe_disentanglement: examples must span at least two tasks");
  }

  const int feat = model.config().feature_dim;
  Eigen::MatrixXd features(static_cast<Eigen::Index>(examples.size()), feat);
  std::vector<int> labels(examples.size());
  for (size_t i = 0; i < examples.size(); ++i) {
    const Representations rep = model.represent(examples[i].tokens);
    features.row(static_cast<Eigen::Index>(i)) =
        (space == RegSpace::kGeneric ? rep.generic : rep.specific).transpose();
    labels[i] = examples[i].task_id;
  }
  const int num_tasks = *tasks.rbegin() + 1;
  return fit_linear_probe(features, labels, num_tasks, seed).holdout_accuracy;
}

void export_embeddings(const Model& model, std::span<const Example> examples,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("export_embeddings: cannot write " +
                             path.string());
  }
  const int feat = model.config().feature_dim;
  out << "id,task";
  for (int i = 0; i < feat; ++i) out << ",g_" << i;
  for (int i = 0; i < feat; ++i) out << ",s_" << i;
  out << '\n';
  for (const Example& ex : examples) {
    const Representations rep = model.represent(ex.tokens);
    out << ex.id << ',' << ex.task_id;
    for (int i = 0; i < feat; ++i) out << ',' << format_double(rep.generic(i));
    for (int i = 0; i < feat; ++i) out << ',' << format_double(rep.specific(i));
    out << '\n';
  }
  if (!out) {
    throw std::runtime_error("export_embeddings: write failed for " +
                             path.string());
  }
}

}  // namespace idbr
