#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cantor/csv.hpp"
#include "cantor/errors.hpp"
#include "cantor/infotheory.hpp"

namespace cantor {

using FeatureVector = std::array<double, 4>;  // pitch, loudness, timbre, rhythm

inline double euclidean(const FeatureVector& a, const FeatureVector& b) {
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    ss += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(ss);
}

struct GenreProfile {
  std::string genre;
  std::size_t song_count = 0;
  FeatureVector mean_profile{};  // per-feature mean over songs with the
                                 // feature present
};

/// Groups song profiles by genre, keeps genres with more than min_songs
/// songs, and averages each feature over the songs where it is present.
/// A qualifying genre where some feature is present in no song at all has
/// no finite mean vector and is dropped. Output sorted by genre.
inline std::vector<GenreProfile> genre_profiles(
    std::span<const std::pair<std::string, ComplexityProfile>> profiles,
    std::size_t min_songs) {
  struct Acc {
    std::size_t songs = 0;
    std::array<double, 4> sum{};
    std::array<std::size_t, 4> present{};
  };
  std::map<std::string, Acc> by_genre;
  for (const auto& [genre, profile] : profiles) {
    Acc& acc = by_genre[genre];
    ++acc.songs;
    for (std::size_t f = 0; f < 4; ++f) {
      const auto& v = profile[static_cast<Feature>(f)];
      if (v) {
        acc.sum[f] += *v;
        ++acc.present[f];
      }
    }
  }
  std::vector<GenreProfile> out;
  for (const auto& [genre, acc] : by_genre) {
    if (acc.songs <= min_songs) continue;
    bool complete = true;
    GenreProfile gp;
    gp.genre = genre;
    gp.song_count = acc.songs;
    for (std::size_t f = 0; f < 4; ++f) {
      if (acc.present[f] == 0) {
        complete = false;
        break;
      }
      gp.mean_profile[f] = acc.sum[f] / static_cast<double>(acc.present[f]);
    }
    if (complete) out.push_back(std::move(gp));
  }
  return out;
}

/// Z-scores each of the four dimensions across profiles. Dimensions with
/// zero spread are left centered at 0.
inline std::vector<GenreProfile> standardize_profiles(
    std::vector<GenreProfile> profiles) {
  if (profiles.empty()) return profiles;
  for (std::size_t f = 0; f < 4; ++f) {
    double mean = 0.0;
    for (const auto& p : profiles) mean += p.mean_profile[f];
    mean /= static_cast<double>(profiles.size());
    double ss = 0.0;
    for (const auto& p : profiles)
      ss += (p.mean_profile[f] - mean) * (p.mean_profile[f] - mean);
    double sd = std::sqrt(ss / static_cast<double>(profiles.size()));
    for (auto& p : profiles)
      p.mean_profile[f] =
          sd > 0.0 ? (p.mean_profile[f] - mean) / sd : 0.0;
  }
  return profiles;
}

// ---------------------------------------------------------------------------
// Agglomerative clustering
// ---------------------------------------------------------------------------

enum class Linkage { single, average, complete };

inline constexpr const char* linkage_name(Linkage l) {
  switch (l) {
    case Linkage::single: return "single";
    case Linkage::average: return "average";
    case Linkage::complete: return "complete";
  }
  return "?";
}

inline std::optional<Linkage> linkage_from_name(std::string_view name) {
  for (Linkage l : {Linkage::single, Linkage::average, Linkage::complete})
    if (name == linkage_name(l)) return l;
  return std::nullopt;
}

/// One merge step. Nodes 0..n-1 are leaves; merge t creates node n+t.
/// left always holds the smaller minimum member label.
struct Merge {
  int left = 0;
  int right = 0;
  double height = 0.0;
};

struct ClusterTree {
  std::vector<std::string> leaves;
  std::vector<FeatureVector> leaf_points;
  std::vector<Merge> merges;  // exactly leaves.size() - 1 entries
  Linkage linkage = Linkage::average;
};

/// Bottom-up merge tree under Euclidean distance with the chosen linkage.
/// Ties on distance break on the lexicographic pair of the clusters'
/// smallest member labels, so the tree is independent of input order.
inline ClusterTree agglomerate(std::span<const GenreProfile> profiles,
                               Linkage linkage = Linkage::average) {
  const std::size_t n = profiles.size();
  if (n < 2)
    throw InvalidArgumentError("agglomerate: need at least 2 profiles");

  ClusterTree tree;
  tree.linkage = linkage;
  for (const auto& p : profiles) {
    tree.leaves.push_back(p.genre);
    tree.leaf_points.push_back(p.mean_profile);
  }

  struct Active {
    int node;               // node id (leaf index or n + merge index)
    std::size_t size;
    std::string min_label;  // smallest member label, for tie-breaking
  };
  std::vector<Active> active;
  active.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    active.push_back({static_cast<int>(i), 1, profiles[i].genre});

  // Dense distance matrix over active clusters, updated via Lance-Williams.
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dist[i][j] = dist[j][i] =
          euclidean(profiles[i].mean_profile, profiles[j].mean_profile);

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t best_a = 0, best_b = 1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        double d = dist[a][b];
        if (d > best_d) continue;
        if (d < best_d) {
          best_d = d;
          best_a = a;
          best_b = b;
          continue;
        }
        auto key = [&](std::size_t x, std::size_t y) {
          const std::string& kx = active[x].min_label;
          const std::string& ky = active[y].min_label;
          return kx < ky ? std::pair(kx, ky) : std::pair(ky, kx);
        };
        if (key(a, b) < key(best_a, best_b)) {
          best_a = a;
          best_b = b;
        }
      }
    }

    const Active& ca = active[best_a];
    const Active& cb = active[best_b];
    Merge merge;
    merge.height = best_d;
    if (ca.min_label <= cb.min_label) {
      merge.left = ca.node;
      merge.right = cb.node;
    } else {
      merge.left = cb.node;
      merge.right = ca.node;
    }
    Active merged;
    merged.node = static_cast<int>(n + step);
    merged.size = ca.size + cb.size;
    merged.min_label = std::min(ca.min_label, cb.min_label);

    // Lance-Williams update of distances to the merged cluster.
    std::vector<double> to_merged(active.size(), 0.0);
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (k == best_a || k == best_b) continue;
      double da = dist[best_a][k];
      double db = dist[best_b][k];
      switch (linkage) {
        case Linkage::single: to_merged[k] = std::min(da, db); break;
        case Linkage::complete: to_merged[k] = std::max(da, db); break;
        case Linkage::average:
          to_merged[k] = (da * static_cast<double>(ca.size) +
                          db * static_cast<double>(cb.size)) /
                         static_cast<double>(ca.size + cb.size);
          break;
      }
    }

    // Replace cluster a with the merged one, drop cluster b.
    tree.merges.push_back(merge);
    active[best_a] = std::move(merged);
    for (std::size_t k = 0; k < active.size(); ++k) {
      dist[best_a][k] = dist[k][best_a] = to_merged[k];
    }
    dist[best_a][best_a] = 0.0;
    std::size_t last = active.size() - 1;
    if (best_b != last) {
      active[best_b] = std::move(active[last]);
      for (std::size_t k = 0; k < active.size(); ++k)
        dist[best_b][k] = dist[k][best_b] = dist[last][k];
      dist[best_b][best_b] = 0.0;
    }
    active.pop_back();
    for (auto& row : dist) row.resize(active.size());
    dist.resize(active.size());
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Silhouette and tree cutting
// ---------------------------------------------------------------------------

/// Mean silhouette score under Euclidean distance. Singleton communities
/// contribute 0; a point equidistant from everything (max(a,b) = 0) also
/// contributes 0. Needs at least 2 non-empty communities.
inline double silhouette(std::span<const FeatureVector> points,
                         std::span<const int> assignment) {
  if (points.size() != assignment.size())
    throw InvalidArgumentError("silhouette: size mismatch");
  std::map<int, std::vector<std::size_t>> communities;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    communities[assignment[i]].push_back(i);
  if (communities.size() < 2)
    throw InvalidArgumentError("silhouette: need at least 2 communities");

  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& own = communities[assignment[i]];
    if (own.size() == 1) continue;  // singleton contributes 0
    double a = 0.0;
    for (std::size_t j : own)
      if (j != i) a += euclidean(points[i], points[j]);
    a /= static_cast<double>(own.size() - 1);

    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, members] : communities) {
      if (label == assignment[i]) continue;
      double mean = 0.0;
      for (std::size_t j : members) mean += euclidean(points[i], points[j]);
      mean /= static_cast<double>(members.size());
      b = std::min(b, mean);
    }
    double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(points.size());
}

/// Leaf assignment after keeping only the first (leaves - k) merges.
/// Communities are numbered by first appearance in leaf order.
inline std::vector<int> cut_assignment(const ClusterTree& tree, int k) {
  const int n = static_cast<int>(tree.leaves.size());
  if (k < 1 || k > n) throw InvalidArgumentError("cut_assignment: bad k");
  std::vector<int> parent(static_cast<std::size_t>(n) + tree.merges.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (int t = 0; t < n - k; ++t) {
    const Merge& m = tree.merges[static_cast<std::size_t>(t)];
    int node = n + t;
    parent[find(m.left)] = find(node);
    parent[find(m.right)] = find(node);
  }
  std::map<int, int> relabel;
  std::vector<int> assignment(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int root = find(i);
    auto [it, inserted] =
        relabel.emplace(root, static_cast<int>(relabel.size()));
    assignment[static_cast<std::size_t>(i)] = it->second;
  }
  return assignment;
}

struct CutResult {
  int k = 0;
  double score = 0.0;                          // silhouette at k
  std::vector<int> assignment;                 // leaf index -> community
  std::vector<std::pair<int, double>> scanned; // (k, silhouette) per candidate
};

/// Cuts the tree at every k in [k_min, k_max], scores each cut by mean
/// silhouette over the leaf vectors, and returns the best (smallest k wins
/// ties).
inline CutResult cut_tree(const ClusterTree& tree, int k_min, int k_max) {
  const int n = static_cast<int>(tree.leaves.size());
  if (k_min < 2 || k_max > n || k_min > k_max)
    throw InvalidArgumentError("cut_tree: k range must lie within [2, leaves]");
  CutResult best;
  for (int k = k_min; k <= k_max; ++k) {
    std::vector<int> assignment = cut_assignment(tree, k);
    double score = silhouette(tree.leaf_points, assignment);
    best.scanned.emplace_back(k, score);
    if (best.assignment.empty() || score > best.score) {
      best.k = k;
      best.score = score;
      best.assignment = std::move(assignment);
    }
  }
  return best;
}

/// Newick rendering of the merge tree; branch length is the height gap
/// between a node and its parent merge.
inline std::string to_newick(const ClusterTree& tree) {
  const int n = static_cast<int>(tree.leaves.size());
  auto node_height = [&](int node) {
    return node < n ? 0.0
                    : tree.merges[static_cast<std::size_t>(node - n)].height;
  };
  auto label = [&](int leaf) {
    std::string s = tree.leaves[static_cast<std::size_t>(leaf)];
    for (char& c : s)
      if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' ||
          c == ' ' || c == '\'')
        c = '_';
    return s;
  };
  std::function<std::string(int)> render = [&](int node) -> std::string {
    if (node < n) return label(node);
    const Merge& m = tree.merges[static_cast<std::size_t>(node - n)];
    auto branch = [&](int child) {
      double len = std::max(0.0, m.height - node_height(child));
      return render(child) + ":" + format_double(len);
    };
    return "(" + branch(m.left) + "," + branch(m.right) + ")";
  };
  return render(n + static_cast<int>(tree.merges.size()) - 1) + ";";
}

}  // namespace cantor
