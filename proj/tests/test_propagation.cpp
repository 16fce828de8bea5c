#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sfc/propagation.hpp"
#include "sfc/rng.hpp"

using namespace sfc;

namespace {

FeatureMap random_features(int h, int w, int c, uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  FeatureMap m(h, w, c);
  for (auto& v : m.data) v = nd(rng);
  return m;
}

LabelGrid random_simplex_labels(int h, int w, int l, uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> ud(0.01, 1.0);
  LabelGrid g(h, w, l);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double sum = 0.0;
      for (int ch = 0; ch < l; ++ch) {
        g.at(i, j)[ch] = ud(rng);
        sum += g.at(i, j)[ch];
      }
      for (int ch = 0; ch < l; ++ch) g.at(i, j)[ch] /= sum;
    }
  return g;
}

// one-hot identity features, id = channel index
FeatureMap onehot_features(int h, int w, int c) {
  FeatureMap m(h, w, c);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) m.at(i, j)[(i * w + j) % c] = 1.0;
  return m;
}

}  // namespace

TEST_CASE("context frame sets") {
  CHECK(context_frames(1, 20) == std::vector<int>{0});
  CHECK(context_frames(2, 2) == std::vector<int>{0, 1});
  CHECK(context_frames(5, 2) == std::vector<int>{0, 3, 4});
  CHECK(context_frames(5, 20) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(context_frames(7, 0) == std::vector<int>{0});
}

TEST_CASE("neighborhood sizes on a 4x4 grid") {
  auto f0 = random_features(4, 4, 5, 1);
  auto f1 = random_features(4, 4, 5, 2);
  std::vector<const FeatureMap*> ctx{&f0, &f1};

  auto one = restricted_affinity(f0, ctx, 1, 0.07);
  CHECK(one.rows[0].size() == 8);        // corner: 4 cells x 2 frames
  CHECK(one.rows[1].size() == 12);       // edge: 6 x 2
  CHECK(one.rows[5].size() == 18);       // interior: 9 x 2

  auto zero = restricted_affinity(f0, ctx, 0, 0.07);
  for (const auto& row : zero.rows) {
    REQUIRE(row.size() == 2);
    CHECK(row[0].frame == 0);
    CHECK(row[1].frame == 1);
  }
  // radius zero attends only to the co-located cell
  CHECK(zero.rows[6][0].row == 1);
  CHECK(zero.rows[6][0].col == 2);

  auto dense = restricted_affinity(f0, ctx, 4, 0.07);
  for (const auto& row : dense.rows) CHECK(row.size() == 32);

  SUBCASE("candidates come in (frame, row, col) order") {
    for (const auto& row : one.rows)
      for (size_t i = 1; i < row.size(); ++i) {
        const auto &a = row[i - 1], &b = row[i];
        CHECK(std::tuple(a.frame, a.row, a.col) < std::tuple(b.frame, b.row, b.col));
      }
  }
}

TEST_CASE("affinity weights follow the shifted exponential") {
  FeatureMap q(1, 2, 2), c(1, 2, 2);
  q.at(0, 0)[0] = 1.0;
  q.at(0, 1)[0] = 1.0;
  c.at(0, 0)[0] = 1.0;
  c.at(0, 1)[0] = 0.6;
  c.at(0, 1)[1] = 0.8;
  std::vector<const FeatureMap*> ctx{&c};
  auto aff = restricted_affinity(q, ctx, 3, 0.5);
  REQUIRE(aff.rows[0].size() == 2);
  CHECK(aff.rows[0][0].w == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(aff.rows[0][1].w == doctest::Approx(std::exp((0.6 - 1.0) / 0.5)).epsilon(1e-12));

  CHECK_THROWS_AS(restricted_affinity(q, ctx, -1, 0.5), ConfigError);
  CHECK_THROWS_AS(restricted_affinity(q, ctx, 1, 0.0), ConfigError);
  CHECK_THROWS_AS(restricted_affinity(q, {}, 1, 0.5), ConfigError);
  FeatureMap wrong(2, 2, 2);
  std::vector<const FeatureMap*> bad{&wrong};
  CHECK_THROWS_AS(restricted_affinity(q, bad, 1, 0.5), ShapeError);
}

TEST_CASE("single identical context frame with k=1 copies labels bitwise") {
  auto f = random_features(4, 4, 8, 3);
  auto labels = random_simplex_labels(4, 4, 5, 4);
  std::vector<const FeatureMap*> ctx{&f};
  std::vector<const LabelGrid*> lab{&labels};
  for (int r : {0, 1, 4}) {
    auto out = propagate_frame(restricted_affinity(f, ctx, r, 0.07), lab, 1);
    CHECK(out.v == labels.v);
  }
}

TEST_CASE("uniform affinities with k=2 average the two lexicographically first cells") {
  FeatureMap f(4, 4, 3);
  for (auto& v : f.data) v = 0.7;  // every cell identical
  auto labels = random_simplex_labels(4, 4, 3, 9);
  std::vector<const FeatureMap*> ctx{&f};
  std::vector<const LabelGrid*> lab{&labels};
  auto out = propagate_frame(restricted_affinity(f, ctx, 4, 0.07), lab, 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int ch = 0; ch < 3; ++ch)
        CHECK(out.at(i, j)[ch] ==
              doctest::Approx(0.5 * labels.at(0, 0)[ch] + 0.5 * labels.at(0, 1)[ch])
                  .epsilon(1e-15));
}

TEST_CASE("equal-weight candidates prefer the earliest frame") {
  FeatureMap f(2, 2, 3);
  for (auto& v : f.data) v = 1.0;
  auto l0 = random_simplex_labels(2, 2, 4, 11);
  auto l1 = random_simplex_labels(2, 2, 4, 12);
  std::vector<const FeatureMap*> ctx{&f, &f};
  std::vector<const LabelGrid*> lab{&l0, &l1};
  auto out = propagate_frame(restricted_affinity(f, ctx, 0, 0.07), lab, 1);
  CHECK(out.v == l0.v);
}

TEST_CASE("fewer candidates than k uses them all") {
  auto f = random_features(3, 3, 4, 21);
  auto labels = random_simplex_labels(3, 3, 2, 22);
  std::vector<const FeatureMap*> ctx{&f};
  std::vector<const LabelGrid*> lab{&labels};
  auto out = propagate_frame(restricted_affinity(f, ctx, 0, 0.07), lab, 5);
  CHECK(out.v == labels.v);  // single candidate, weight renormalizes to 1
}

TEST_CASE("static video is a fixed point for k=1") {
  auto f = random_features(4, 4, 8, 31);
  std::vector<FeatureMap> frames(6, f);
  auto labels = random_simplex_labels(4, 4, 5, 32);
  for (auto [m, r, tau] : {std::tuple{1, 0, 0.07}, {3, 2, 0.07}, {20, 4, 1.0}}) {
    PropagationConfig cfg;
    cfg.top_k = 1;
    cfg.context_m = m;
    cfg.radius = r;
    cfg.tau = tau;
    auto out = propagate_video(frames, labels, cfg);
    REQUIRE(out.size() == 6);
    for (const auto& lg : out) CHECK(lg.v == labels.v);
  }
}

TEST_CASE("static video with k>1 keeps decoded masks") {
  auto f = random_features(4, 4, 16, 41);
  std::vector<FeatureMap> frames(5, f);
  LabelGrid labels(4, 4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) labels.at(i, j)[(i + j) % 3] = 1.0;
  PropagationConfig cfg;
  cfg.top_k = 3;
  cfg.context_m = 2;
  cfg.radius = 4;
  auto out = propagate_video(frames, labels, cfg);
  auto want = labels_to_image(labels, 16, 16);
  for (const auto& lg : out) CHECK(labels_to_image(lg, 16, 16).px == want.px);
}

TEST_CASE("translated identity features move labels by one cell") {
  const int g = 4, ids = 16 + 4;
  auto f0 = onehot_features(g, g, ids);
  FeatureMap f1(g, g, ids);
  for (int i = 0; i < g; ++i) {
    for (int j = 1; j < g; ++j)
      for (int ch = 0; ch < ids; ++ch) f1.at(i, j)[ch] = f0.at(i, j - 1)[ch];
    f1.at(i, 0)[16 + i] = 1.0;  // fresh content entering on the left
  }
  auto labels = random_simplex_labels(g, g, 6, 51);
  PropagationConfig cfg;
  cfg.top_k = 1;
  cfg.context_m = 1;
  cfg.radius = 1;
  auto out = propagate_video({f0, f1}, labels, cfg);
  for (int i = 0; i < g; ++i) {
    for (int j = 1; j < g; ++j)
      for (int ch = 0; ch < 6; ++ch) CHECK(out[1].at(i, j)[ch] == labels.at(i, j - 1)[ch]);
    // unmatched fresh cells tie everywhere and fall to the lexicographic first
    for (int ch = 0; ch < 6; ++ch)
      CHECK(out[1].at(i, 0)[ch] == labels.at(std::max(0, i - 1), 0)[ch]);
  }
}

TEST_CASE("propagation preserves the simplex") {
  std::vector<FeatureMap> frames;
  for (int t = 0; t < 5; ++t) frames.push_back(random_features(3, 3, 6, 60 + t));
  auto labels = random_simplex_labels(3, 3, 4, 66);
  PropagationConfig cfg;
  cfg.top_k = 4;
  cfg.context_m = 2;
  cfg.radius = 1;
  auto out = propagate_video(frames, labels, cfg);
  for (const auto& lg : out)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double sum = 0.0;
        for (int ch = 0; ch < 4; ++ch) {
          CHECK(lg.at(i, j)[ch] >= -1e-12);
          sum += lg.at(i, j)[ch];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
}

TEST_CASE("propagation is deterministic") {
  std::vector<FeatureMap> frames;
  for (int t = 0; t < 4; ++t) frames.push_back(random_features(4, 4, 5, 70 + t));
  auto labels = random_simplex_labels(4, 4, 3, 77);
  PropagationConfig cfg;
  cfg.top_k = 5;
  cfg.context_m = 3;
  cfg.radius = 2;
  auto a = propagate_video(frames, labels, cfg);
  auto b = propagate_video(frames, labels, cfg);
  for (size_t t = 0; t < a.size(); ++t) CHECK(a[t].v == b[t].v);
}

TEST_CASE("propagation input validation") {
  auto f = random_features(4, 4, 4, 80);
  auto labels = random_simplex_labels(4, 4, 2, 81);
  PropagationConfig cfg;
  CHECK_THROWS_AS(propagate_video({}, labels, cfg), ConfigError);
  auto bad_labels = random_simplex_labels(3, 3, 2, 82);
  CHECK_THROWS_AS(propagate_video({f}, bad_labels, cfg), ShapeError);
  std::vector<FeatureMap> mixed{f, random_features(3, 3, 4, 83)};
  CHECK_THROWS_AS(propagate_video(mixed, labels, cfg), ShapeError);
  PropagationConfig badk;
  badk.top_k = 0;
  CHECK_THROWS_AS(propagate_video({f}, labels, badk), ConfigError);
  auto single = propagate_video({f}, labels, cfg);
  REQUIRE(single.size() == 1);
  CHECK(single[0].v == labels.v);
}

TEST_CASE("label image to grid fractions") {
  ByteImage img(8, 8, 0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) img.at(x, y) = 1;  // 6 px of class 1 in cell (0,0)
  img.at(7, 7) = 2;
  auto lg = labels_from_image(img, 2, 2, 3);
  CHECK(lg.at(0, 0)[1] == 6.0 / 16.0);
  CHECK(lg.at(0, 0)[0] == 10.0 / 16.0);
  CHECK(lg.at(1, 1)[2] == 1.0 / 16.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(lg.at(i, j)[0] + lg.at(i, j)[1] + lg.at(i, j)[2] == 1.0);

  ByteImage bad(8, 8, 7);
  CHECK_THROWS_AS(labels_from_image(bad, 2, 2, 3), DataError);
  CHECK_THROWS_AS(labels_from_image(img, 3, 3, 3), ShapeError);
}

TEST_CASE("label grid decoding") {
  LabelGrid lg(2, 2, 3);
  lg.at(0, 0)[0] = 0.5;
  lg.at(0, 0)[1] = 0.5;  // tie -> class 0
  lg.at(0, 1)[2] = 0.9;
  lg.at(1, 0)[1] = 1.0;
  lg.at(1, 1)[0] = 1.0;
  auto img = labels_to_image(lg, 8, 8);
  CHECK(img.at(0, 0) == 0);
  CHECK(img.at(3, 3) == 0);
  CHECK(img.at(4, 0) == 2);
  CHECK(img.at(7, 3) == 2);
  CHECK(img.at(0, 4) == 1);
  CHECK(img.at(4, 4) == 0);
  CHECK_THROWS_AS(labels_to_image(lg, 7, 8), ShapeError);
}

TEST_CASE("keypoint decoding picks channel argmax cell centers") {
  LabelGrid lg(4, 4, 2);
  lg.at(2, 3)[0] = 0.7;
  lg.at(1, 1)[1] = 0.4;
  auto kps = decode_keypoints(lg, 64, 64);
  REQUIRE(kps.size() == 2);
  CHECK(kps[0].x == doctest::Approx(56.0).epsilon(1e-12));
  CHECK(kps[0].y == doctest::Approx(40.0).epsilon(1e-12));
  CHECK(kps[1].x == doctest::Approx(24.0).epsilon(1e-12));
  CHECK(kps[1].y == doctest::Approx(24.0).epsilon(1e-12));
}

TEST_CASE("region similarity") {
  ByteImage a(8, 8, 0), b(8, 8, 0);
  SUBCASE("both empty") { CHECK(metric_j(a, b) == 1.0); }
  SUBCASE("identical") {
    for (int y = 2; y < 6; ++y)
      for (int x = 2; x < 6; ++x) a.at(x, y) = b.at(x, y) = 1;
    CHECK(metric_j(a, b) == 1.0);
  }
  SUBCASE("disjoint") {
    a.at(0, 0) = 1;
    b.at(7, 7) = 1;
    CHECK(metric_j(a, b) == 0.0);
  }
  SUBCASE("half overlap") {
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) b.at(x, y) = 1;  // gt: 4x4
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 2; ++x) a.at(x, y) = 1;  // pred: left half
    CHECK(metric_j(a, b) == 0.5);
  }
  SUBCASE("size mismatch") {
    ByteImage c(4, 4, 0);
    CHECK_THROWS_AS(metric_j(a, c), ShapeError);
  }
}

TEST_CASE("boundary tolerance defaults") {
  CHECK(default_f_tolerance(64, 64) == 1);
  CHECK(default_f_tolerance(256, 256) == 3);
  CHECK(default_f_tolerance(854, 480) == 8);
}

namespace {

// independent per-pixel minimum-distance reference
double reference_f(const ByteImage& pred, const ByteImage& gt, int tol) {
  auto boundary = [](const ByteImage& m) {
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) {
        if (!m.at(x, y)) continue;
        if (x == 0 || y == 0 || x == m.w - 1 || y == m.h - 1 || !m.at(x - 1, y) ||
            !m.at(x + 1, y) || !m.at(x, y - 1) || !m.at(x, y + 1))
          out.emplace_back(x, y);
      }
    return out;
  };
  auto pb = boundary(pred), gb = boundary(gt);
  if (pb.empty() && gb.empty()) return 1.0;
  if (pb.empty() || gb.empty()) return 0.0;
  auto frac_within = [tol](const std::vector<std::pair<int, int>>& from,
                           const std::vector<std::pair<int, int>>& to) {
    long hit = 0;
    for (auto [x, y] : from) {
      int best = 1 << 20;
      for (auto [u, v] : to) best = std::min(best, std::max(std::abs(x - u), std::abs(y - v)));
      hit += (best <= tol);
    }
    return static_cast<double>(hit) / static_cast<double>(from.size());
  };
  const double p = frac_within(pb, gb), r = frac_within(gb, pb);
  return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

}  // namespace

TEST_CASE("boundary f-measure") {
  SUBCASE("identical masks") {
    ByteImage a(64, 64, 0);
    for (int y = 10; y < 30; ++y)
      for (int x = 10; x < 30; ++x) a.at(x, y) = 1;
    CHECK(metric_f(a, a, 1) == 1.0);
  }
  SUBCASE("empty cases") {
    ByteImage e(16, 16, 0), f(16, 16, 0);
    CHECK(metric_f(e, f, 1) == 1.0);
    f.at(4, 4) = 1;
    CHECK(metric_f(e, f, 1) == 0.0);
  }
  SUBCASE("square shifted by exactly the tolerance stays perfect") {
    ByteImage a(64, 64, 0), b(64, 64, 0);
    for (int y = 20; y < 30; ++y)
      for (int x = 20; x < 30; ++x) {
        a.at(x, y) = 1;
        b.at(x + 1, y) = 1;
      }
    CHECK(metric_f(a, b, 1) == 1.0);
    ByteImage c(64, 64, 0);
    for (int y = 20; y < 30; ++y)
      for (int x = 22; x < 32; ++x) c.at(x, y) = 1;
    CHECK(metric_f(a, c, 1) < 1.0);
  }
  SUBCASE("distant boundaries score zero") {
    ByteImage a(64, 64, 0), b(64, 64, 0);
    for (int y = 2; y < 6; ++y)
      for (int x = 2; x < 6; ++x) a.at(x, y) = 1;
    for (int y = 40; y < 44; ++y)
      for (int x = 40; x < 44; ++x) b.at(x, y) = 1;
    CHECK(metric_f(a, b, 1) == 0.0);
  }
  SUBCASE("matches the brute-force reference on random rectangles") {
    Rng rng(99);
    std::uniform_int_distribution<int> pos(0, 20), len(2, 10), tol(0, 3);
    for (int it = 0; it < 25; ++it) {
      ByteImage a(32, 32, 0), b(32, 32, 0);
      const int ax = pos(rng), ay = pos(rng), aw = len(rng), ah = len(rng);
      const int bx = pos(rng), by2 = pos(rng), bw = len(rng), bh = len(rng);
      for (int y = ay; y < std::min(32, ay + ah); ++y)
        for (int x = ax; x < std::min(32, ax + aw); ++x) a.at(x, y) = 1;
      for (int y = by2; y < std::min(32, by2 + bh); ++y)
        for (int x = bx; x < std::min(32, bx + bw); ++x) b.at(x, y) = 1;
      const int t = tol(rng);
      CHECK(metric_f(a, b, t) == reference_f(a, b, t));
    }
  }
}

TEST_CASE("keypoint accuracy") {
  std::vector<Point> gt{{10, 10}, {20, 20}, {30, 30}, {40, 40}};
  SUBCASE("exact predictions") { CHECK(metric_pck(gt, gt, 0.1, 50.0) == 1.0); }
  SUBCASE("all far away") {
    std::vector<Point> pred{{0, 0}, {0, 0}, {0, 0}, {0, 0}};
    CHECK(metric_pck(pred, gt, 0.1, 50.0) == 0.0);
  }
  SUBCASE("half within threshold") {
    std::vector<Point> pred{{10, 11}, {20, 21}, {90, 30}, {40, 90}};
    CHECK(metric_pck(pred, gt, 0.1, 50.0) == 0.5);
  }
  SUBCASE("boundary distance counts as correct") {
    std::vector<Point> pred{{13, 14}};
    std::vector<Point> one{{10, 10}};
    CHECK(metric_pck(pred, one, 0.5, 10.0) == 1.0);  // distance exactly 5 = alpha*ref
  }
  SUBCASE("count mismatch") {
    std::vector<Point> pred{{0, 0}};
    CHECK_THROWS_AS(metric_pck(pred, gt, 0.1, 50.0), ShapeError);
  }
}

TEST_CASE("affinity heatmaps") {
  auto f = random_features(3, 5, 6, 111);
  auto img = affinity_heatmap(f, 1, 2, f);
  CHECK(img.w == 5);
  CHECK(img.h == 3);
  CHECK(img.at(2, 1) == 255);  // self-similarity is the maximum

  FeatureMap flat(3, 5, 6);
  for (auto& v : flat.data) v = 0.3;
  auto gray = affinity_heatmap(flat, 0, 0, flat);
  for (uint8_t v : gray.px) CHECK(v == 128);

  CHECK_THROWS_AS(affinity_heatmap(f, 3, 0, f), ShapeError);
}
