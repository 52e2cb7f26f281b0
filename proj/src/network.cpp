#include "bsbt/network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <set>

#include "bsbt/errors.hpp"

namespace bsbt {

std::optional<std::size_t> AreaNetwork::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t AreaNetwork::require_index(const std::string& id) const {
  auto idx = index_of(id);
  if (!idx) throw ValidationError("unknown area id '" + id + "'");
  return *idx;
}

std::vector<std::size_t> AreaNetwork::degrees() const {
  std::vector<std::size_t> deg(size(), 0);
  for (std::size_t i = 0; i < size(); ++i) deg[i] = adjacency_[i].size();
  return deg;
}

AreaNetwork build_network(std::vector<Area> areas, const std::vector<EdgeSpec>& edges,
                          const std::vector<EdgeSpec>& extra_edges) {
  AreaNetwork net;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    if (areas[i].id.empty()) throw ValidationError("empty area id at position " + std::to_string(i));
    if (!net.index_.emplace(areas[i].id, i).second)
      throw ValidationError("duplicate area id '" + areas[i].id + "'");
  }
  net.areas_ = std::move(areas);
  net.adjacency_.assign(net.areas_.size(), {});

  std::set<std::pair<std::size_t, std::size_t>> seen;
  auto add = [&](const EdgeSpec& e) {
    auto ia = net.index_of(e.a);
    auto ib = net.index_of(e.b);
    if (!ia) throw ValidationError("edge endpoint '" + e.a + "' is not an area");
    if (!ib) throw ValidationError("edge endpoint '" + e.b + "' is not an area");
    if (*ia == *ib) throw ValidationError("self-loop on area '" + e.a + "'");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight))
      throw ValidationError("edge " + e.a + "-" + e.b + " has non-positive weight");
    auto key = std::minmax(*ia, *ib);
    if (!seen.insert(key).second)
      throw ValidationError("duplicate edge " + e.a + "-" + e.b);
    net.edges_.push_back({key.first, key.second, e.weight});
    net.adjacency_[key.first].emplace_back(key.second, e.weight);
    net.adjacency_[key.second].emplace_back(key.first, e.weight);
  };
  for (const auto& e : edges) add(e);
  for (const auto& e : extra_edges) add(e);
  return net;
}

AreaNetwork build_network(const std::vector<std::string>& ids,
                          const std::vector<std::pair<std::string, std::string>>& edges,
                          const std::vector<std::pair<std::string, std::string>>& extra_edges) {
  std::vector<Area> areas;
  areas.reserve(ids.size());
  for (const auto& id : ids) areas.push_back({id, id, std::nullopt, std::nullopt, {}});
  auto convert = [](const std::vector<std::pair<std::string, std::string>>& in) {
    std::vector<EdgeSpec> out;
    out.reserve(in.size());
    for (const auto& [a, b] : in) out.push_back({a, b, 1.0});
    return out;
  };
  return build_network(std::move(areas), convert(edges), convert(extra_edges));
}

DistanceMatrix shortest_paths(const AreaNetwork& net) {
  const std::size_t n = net.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  DistanceMatrix out;
  out.d = Eigen::MatrixXd::Constant(n, n, kInf);
  out.reachable = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);

  using Item = std::pair<double, std::size_t>;
  std::vector<double> dist(n);
  for (std::size_t src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[src] = 0.0;
    queue.emplace(0.0, src);
    while (!queue.empty()) {
      auto [du, u] = queue.top();
      queue.pop();
      if (du > dist[u]) continue;
      for (const auto& [v, w] : net.neighbours()[u]) {
        if (du + w < dist[v]) {
          dist[v] = du + w;
          queue.emplace(dist[v], v);
        }
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      out.d(src, j) = dist[j];
      out.reachable(src, j) = std::isfinite(dist[j]);
    }
  }
  return out;
}

Eigen::MatrixXd adjacency_matrix(const AreaNetwork& net) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(net.size(), net.size());
  for (const auto& e : net.edges()) {
    a(e.a, e.b) = 1.0;
    a(e.b, e.a) = 1.0;
  }
  return a;
}

AreaNetwork grid_network(std::size_t rows, std::size_t cols) {
  std::vector<Area> areas;
  std::vector<EdgeSpec> edges;
  auto id = [](std::size_t r, std::size_t c) {
    return "r" + std::to_string(r) + "c" + std::to_string(c);
  };
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      areas.push_back({id(r, c), id(r, c), static_cast<double>(c), static_cast<double>(r), {}});
      if (c + 1 < cols) edges.push_back({id(r, c), id(r, c + 1), 1.0});
      if (r + 1 < rows) edges.push_back({id(r, c), id(r + 1, c), 1.0});
    }
  }
  return build_network(std::move(areas), edges);
}

}  // namespace bsbt
