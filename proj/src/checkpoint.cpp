#include "rnnscope/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rnnscope {

namespace {

constexpr int kFormatVersion = 1;

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != c) {
      throw std::runtime_error("checkpoint: ragged matrix rows");
    }
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
  }
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& arr) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = arr[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RnnParams& params) {
  params.validate();
  nlohmann::json doc;
  doc["format_version"] = kFormatVersion;
  doc["cell_kind"] = to_string(params.kind);
  doc["hidden_size"] = params.hidden_size;
  doc["input_size"] = params.input_size;
  doc["null_token"] = params.null_token;
  nlohmann::json arrays;
  for (int k = 0; k < params.gate_count(); ++k) {
    arrays["W" + std::to_string(k)] = matrix_to_json(params.W[static_cast<std::size_t>(k)]);
    arrays["U" + std::to_string(k)] = matrix_to_json(params.U[static_cast<std::size_t>(k)]);
    arrays["b" + std::to_string(k)] = vector_to_json(params.bias[static_cast<std::size_t>(k)]);
  }
  arrays["readout_w"] = vector_to_json(params.readout_w);
  arrays["readout_b"] = params.readout_b;
  arrays["h0"] = vector_to_json(params.h0);
  doc["arrays"] = std::move(arrays);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << doc.dump(1) << '\n';
}

RnnParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  nlohmann::json doc;
  in >> doc;
  if (doc.at("format_version").get<int>() != kFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format version in " + path.string());
  }
  RnnParams p;
  p.kind = cell_kind_from_string(doc.at("cell_kind").get<std::string>());
  p.hidden_size = doc.at("hidden_size").get<int>();
  p.input_size = doc.at("input_size").get<int>();
  p.null_token = doc.at("null_token").get<int>();
  const auto& arrays = doc.at("arrays");
  for (int k = 0; k < p.gate_count(); ++k) {
    p.W.push_back(matrix_from_json(arrays.at("W" + std::to_string(k))));
    p.U.push_back(matrix_from_json(arrays.at("U" + std::to_string(k))));
    p.bias.push_back(vector_from_json(arrays.at("b" + std::to_string(k))));
  }
  p.readout_w = vector_from_json(arrays.at("readout_w"));
  p.readout_b = arrays.at("readout_b").get<double>();
  p.h0 = vector_from_json(arrays.at("h0"));
  p.validate();
  return p;
}

}  // namespace rnnscope
