#pragma once

// JSON encoding of network tensors shared by the checkpoint readers and
// writers. nlohmann::json prints doubles in shortest round-trip form, so
// values survive a save/load cycle bit-exactly.

#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "vrpflow/policy.hpp"

namespace vrpflow::nn::detail {

using nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

// Fills `out`, whose shape is the expected one.
inline void matrix_from_json(const json& j, Matrix& out, const std::string& what) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (rows != out.rows() || cols != out.cols()) {
    throw std::runtime_error(fmt::format("{}: stored shape {}x{}, expected {}x{}", what, rows,
                                         cols, out.rows(), out.cols()));
  }
  const auto& data = j.at("data");
  if (data.size() != static_cast<std::size_t>(rows * cols)) {
    throw std::runtime_error(fmt::format("{}: wrong element count", what));
  }
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = data[k++].get<double>();
  }
}

inline json dims_to_json(const Dims& d) {
  return json{{"layers", d.layers}, {"heads", d.heads}, {"units", d.units},
              {"mlp_hidden", d.mlp_hidden}};
}

inline Dims dims_from_json(const json& j) {
  Dims d;
  d.layers = j.at("layers").get<int>();
  d.heads = j.at("heads").get<int>();
  d.units = j.at("units").get<int>();
  d.mlp_hidden = j.at("mlp_hidden").get<int>();
  return d;
}

template <class Visit, class P>
json tensors_to_json(Visit visit, P& params) {
  json arr = json::array();
  visit([&](Matrix& m) { arr.push_back(matrix_to_json(m)); }, params);
  return arr;
}

template <class Visit, class P>
void tensors_from_json(Visit visit, P& params, const json& arr, const std::string& what) {
  std::size_t k = 0;
  visit(
      [&](Matrix& m) {
        if (k >= arr.size()) throw std::runtime_error(what + ": too few tensors");
        matrix_from_json(arr[k], m, fmt::format("{} tensor {}", what, k));
        ++k;
      },
      params);
  if (k != arr.size()) throw std::runtime_error(what + ": too many tensors");
}

inline json running_to_json(const RunningStats& rs) {
  json arr = json::array();
  for (const BatchNormStats& s : rs) {
    arr.push_back(json{{"mean", matrix_to_json(s.mean)}, {"var", matrix_to_json(s.var)}});
  }
  return arr;
}

inline void running_from_json(const json& arr, RunningStats& rs, const std::string& what) {
  if (arr.size() != rs.size()) throw std::runtime_error(what + ": layer count mismatch");
  for (std::size_t l = 0; l < rs.size(); ++l) {
    matrix_from_json(arr[l].at("mean"), rs[l].mean, what + " running mean");
    matrix_from_json(arr[l].at("var"), rs[l].var, what + " running var");
  }
}

struct PolicyVisit {
  template <class F, class... P>
  void operator()(F&& f, P&... p) const {
    for_each_policy_tensor(f, p...);
  }
};

struct DiscVisit {
  template <class F, class... P>
  void operator()(F&& f, P&... p) const {
    for_each_disc_tensor(f, p...);
  }
};

inline json policy_to_json(const Policy& p) {
  Policy copy = p;
  return json{{"dims", dims_to_json(p.dims)},
              {"tensors", tensors_to_json(PolicyVisit{}, copy.params)},
              {"batch_norm", running_to_json(p.bn)}};
}

inline json disc_to_json(const Discriminator& d) {
  Discriminator copy = d;
  return json{{"dims", dims_to_json(d.dims)},
              {"tensors", tensors_to_json(DiscVisit{}, copy.params)},
              {"batch_norm", running_to_json(d.bn)}};
}

inline Policy policy_from_json(const json& j) {
  Policy p = init_policy(dims_from_json(j.at("dims")), 0);
  tensors_from_json(PolicyVisit{}, p.params, j.at("tensors"), "policy");
  running_from_json(j.at("batch_norm"), p.bn, "policy");
  return p;
}

inline Discriminator disc_from_json(const json& j) {
  Discriminator d = init_discriminator(dims_from_json(j.at("dims")), 0);
  tensors_from_json(DiscVisit{}, d.params, j.at("tensors"), "discriminator");
  running_from_json(j.at("batch_norm"), d.bn, "discriminator");
  return d;
}

}  // namespace vrpflow::nn::detail
