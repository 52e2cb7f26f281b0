#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace bsbt {

struct Area {
  std::string id;
  std::string name;
  std::optional<double> x;
  std::optional<double> y;
  std::string image_url;  // passthrough metadata for the elicitation UI
};

struct EdgeSpec {
  std::string a;
  std::string b;
  double weight = 1.0;
};

struct Edge {
  std::size_t a;  // a < b
  std::size_t b;
  double weight;
};

// Undirected graph of areas. Area order is the construction order and fixes
// the row/column indexing of every vector and matrix built from it.
class AreaNetwork {
 public:
  AreaNetwork() = default;

  std::size_t size() const { return areas_.size(); }
  const std::vector<Area>& areas() const { return areas_; }
  const Area& area(std::size_t i) const { return areas_.at(i); }
  const std::vector<Edge>& edges() const { return edges_; }

  std::optional<std::size_t> index_of(const std::string& id) const;
  std::size_t require_index(const std::string& id) const;

  std::vector<std::size_t> degrees() const;
  // neighbours()[i] lists (j, weight) pairs.
  const std::vector<std::vector<std::pair<std::size_t, double>>>& neighbours() const {
    return adjacency_;
  }

 private:
  friend AreaNetwork build_network(std::vector<Area>, const std::vector<EdgeSpec>&,
                                   const std::vector<EdgeSpec>&);
  std::vector<Area> areas_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::pair<std::size_t, double>>> adjacency_;
};

// Throws ValidationError on duplicate ids, dangling endpoints, self-loops,
// repeated edges or non-positive weights. `extra_edges` are manual bridges
// added on top of the adjacency edges (e.g. ferry links across water).
AreaNetwork build_network(std::vector<Area> areas, const std::vector<EdgeSpec>& edges,
                          const std::vector<EdgeSpec>& extra_edges = {});

// Convenience overload for tests and generators: ids only.
AreaNetwork build_network(const std::vector<std::string>& ids,
                          const std::vector<std::pair<std::string, std::string>>& edges,
                          const std::vector<std::pair<std::string, std::string>>& extra_edges = {});

struct DistanceMatrix {
  Eigen::MatrixXd d;  // +inf where unreachable
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> reachable;

  bool fully_reachable() const { return reachable.all(); }
};

// All-pairs shortest paths, one Dijkstra run per source.
DistanceMatrix shortest_paths(const AreaNetwork& net);

Eigen::MatrixXd adjacency_matrix(const AreaNetwork& net);

// rows x cols lattice with 4-neighbour adjacency; ids are "r<row>c<col>".
AreaNetwork grid_network(std::size_t rows, std::size_t cols);

}  // namespace bsbt
