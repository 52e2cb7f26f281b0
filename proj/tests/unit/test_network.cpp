#include <doctest.h>

#include <limits>

#include "bsbt/errors.hpp"
#include "bsbt/network.hpp"
#include "bsbt/random.hpp"

using namespace bsbt;

namespace {

// Floyd-Warshall as an independent all-pairs oracle.
Eigen::MatrixXd floyd_warshall(const AreaNetwork& net) {
  const auto n = static_cast<Eigen::Index>(net.size());
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, inf);
  for (Eigen::Index i = 0; i < n; ++i) d(i, i) = 0.0;
  for (const auto& e : net.edges()) {
    const auto a = static_cast<Eigen::Index>(e.a), b = static_cast<Eigen::Index>(e.b);
    d(a, b) = d(b, a) = std::min(d(a, b), e.weight);
  }
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
  return d;
}

AreaNetwork random_network(std::size_t n, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Area> areas;
  for (std::size_t i = 0; i < n; ++i) areas.push_back({"n" + std::to_string(i), "", {}, {}, {}});
  std::vector<EdgeSpec> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (uniform01(rng) < p) edges.push_back({areas[i].id, areas[j].id, 0.1 + 2.0 * uniform01(rng)});
  return build_network(std::move(areas), edges);
}

}  // namespace

TEST_CASE("shortest paths agree with Floyd-Warshall on random weighted graphs") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto net = random_network(12, 0.2, seed);
    const auto dm = shortest_paths(net);
    const Eigen::MatrixXd oracle = floyd_warshall(net);
    for (Eigen::Index i = 0; i < oracle.rows(); ++i)
      for (Eigen::Index j = 0; j < oracle.cols(); ++j) {
        if (std::isinf(oracle(i, j))) {
          CHECK(std::isinf(dm.d(i, j)));
          CHECK_FALSE(dm.reachable(i, j));
        } else {
          CHECK(dm.d(i, j) == doctest::Approx(oracle(i, j)).epsilon(1e-12));
          CHECK(dm.reachable(i, j));
        }
      }
  }
}

TEST_CASE("path of three areas") {
  const auto net = build_network({"a", "b", "c"}, {{"a", "b"}, {"b", "c"}});
  const auto dm = shortest_paths(net);
  CHECK(dm.d(0, 2) == 2.0);
  CHECK(dm.fully_reachable());
  CHECK(net.degrees() == std::vector<std::size_t>{1, 2, 1});
  const Eigen::MatrixXd a = adjacency_matrix(net);
  CHECK(a(0, 1) == 1.0);
  CHECK(a(0, 2) == 0.0);
  CHECK(a.isApprox(a.transpose()));
}

TEST_CASE("disconnected components are flagged unreachable") {
  const auto net = build_network({"a", "b", "c", "d"}, {{"a", "b"}, {"c", "d"}});
  const auto dm = shortest_paths(net);
  CHECK_FALSE(dm.fully_reachable());
  CHECK(std::isinf(dm.d(0, 3)));
}

TEST_CASE("manual bridge edges join islands") {
  const auto net = build_network({"a", "b", "c"}, {{"a", "b"}}, {{"b", "c"}});
  CHECK(shortest_paths(net).fully_reachable());
  CHECK(net.edges().size() == 2);
}

TEST_CASE("construction errors") {
  CHECK_THROWS_AS(build_network(std::vector<std::string>{"a", "a"}, {}), ValidationError);
  CHECK_THROWS_AS(build_network(std::vector<std::string>{"a", "b"}, {{"a", "z"}}), ValidationError);
  CHECK_THROWS_AS(build_network(std::vector<std::string>{"a", "b"}, {{"a", "a"}}), ValidationError);
  CHECK_THROWS_AS(build_network(std::vector<std::string>{"a", "b"}, {{"a", "b"}, {"b", "a"}}), ValidationError);
  CHECK_THROWS_AS(build_network({Area{"a", "", {}, {}, {}}, Area{"b", "", {}, {}, {}}}, {{"a", "b", 0.0}}),
                  ValidationError);
  CHECK_THROWS_AS(build_network({Area{"", "", {}, {}, {}}}, {}), ValidationError);
}

TEST_CASE("index lookup") {
  const auto net = build_network(std::vector<std::string>{"x", "y"}, {{"x", "y"}});
  CHECK(net.index_of("y") == 1u);
  CHECK_FALSE(net.index_of("q").has_value());
  CHECK_THROWS_AS(net.require_index("q"), ValidationError);
}

TEST_CASE("grid network has 4-neighbour adjacency") {
  const auto net = grid_network(3, 4);
  CHECK(net.size() == 12);
  CHECK(net.edges().size() == 3 * 3 + 2 * 4);
  CHECK(net.area(5).id == "r1c1");
  const auto deg = net.degrees();
  CHECK(deg[0] == 2);
  CHECK(deg[5] == 4);
  CHECK(shortest_paths(net).d(0, 11) == 5.0);
}
