#include <windlift/io.hpp>
#include <windlift/synthetic.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace windlift;
using io::json;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("windlift_io_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

json square_scene_json() {
  return json::parse(R"({
    "format": 1,
    "domain": {"outer": [[0, 0], [1, 0], [1, 1], [0, 1]]},
    "material": {"mu": 2.0, "lambda": 1.5, "density": 1.0, "thickness": 0.1},
    "gravity": [0, 0, -9.8],
    "pinned": [{"type": "rect", "min": [0, 0], "max": [0.05, 1]},
               {"type": "circle", "center": [1, 1], "radius": 0.1}],
    "pin_spacing": 0.02,
    "cuts": {"polylines": [[[0.5, -0.05], [0.5, 0.6]]], "alpha": 0.25, "tip_radius": 0.03},
    "cubature": {"n": 500, "seed": 3},
    "sim": {"h": 0.01, "max_iters": 50, "solver": "newton"}
  })");
}

}  // namespace

TEST(SceneFile, ParsesAndBuilds) {
  const io::SceneSpec scene_spec = io::scene_from_json(square_scene_json());
  EXPECT_EQ(scene_spec.material.mu, 2.0);
  EXPECT_EQ(scene_spec.curve.alpha(), 0.25);
  EXPECT_EQ(scene_spec.sim.solver, InnerSolver::newton);
  const Scene s = io::build_scene(scene_spec);
  EXPECT_EQ(s.cubature.size(), 500u);
  EXPECT_EQ(s.tip_radius, 0.03);
  EXPECT_EQ(s.sim.max_iters, 50);
  // 3 x 50 lattice in the strip, a quarter disc in the corner.
  std::size_t strip = 0, corner = 0;
  for (const Point2& p : s.pinned) {
    EXPECT_TRUE(s.domain.contains(p));
    if (p.x() <= 0.05) ++strip;
    if ((p - Point2(1, 1)).norm() <= 0.1) ++corner;
  }
  EXPECT_EQ(strip, 150u);
  EXPECT_GT(corner, 0u);
  EXPECT_EQ(strip + corner, s.pinned.size());
}

TEST(SceneFile, RoundTrip) {
  const io::SceneSpec a = io::scene_from_json(square_scene_json());
  const io::SceneSpec b = io::scene_from_json(io::to_json(a));
  EXPECT_EQ(io::to_json(a), io::to_json(b));
  EXPECT_EQ(a.curve, b.curve);
  EXPECT_EQ(io::build_scene(a).pinned, io::build_scene(b).pinned);
}

TEST(SceneFile, RejectsInvalidDocuments) {
  auto expect_reject = [](json j) { EXPECT_THROW(io::scene_from_json(j), io::FormatError) << j.dump(); };
  json j = square_scene_json();
  j["format"] = 2;
  expect_reject(j);
  j = square_scene_json();
  j["colour"] = "red";
  expect_reject(j);
  j = square_scene_json();
  j["material"]["mu"] = -1;
  expect_reject(j);
  j = square_scene_json();
  j["material"]["mu"] = "soft";
  expect_reject(j);
  j = square_scene_json();
  j["cuts"]["alpha"] = 1.5;
  expect_reject(j);
  j = square_scene_json();
  j["cuts"]["polylines"] = json::parse("[[[0, 0]]]");
  expect_reject(j);
  j = square_scene_json();
  j["domain"]["outer"] = json::parse("[[0, 0], [1, 0], [2, 0]]");
  expect_reject(j);
  j = square_scene_json();
  j["pinned"][0]["type"] = "triangle";
  expect_reject(j);
  j = square_scene_json();
  j.erase("domain");
  expect_reject(j);
  j = square_scene_json();
  j["sim"]["h"] = 0;
  expect_reject(j);
  j = square_scene_json();
  j["pinned"] = json::parse(R"([{"type": "circle", "center": [5, 5], "radius": 0.1}])");
  EXPECT_THROW(io::build_scene(io::scene_from_json(j)), io::FormatError);
}

TEST(TrainConfigFile, RoundTripAndValidation) {
  TrainConfig c;
  c.mode = TrainMode::data_driven;
  c.steps = 77;
  c.network.hidden = {12, 7};
  c.network.activation = Activation::sine;
  c.network.k = 5;
  c.network.height_input = false;
  c.lr = {3e-3, 2e-5};
  c.alpha_samples = {0.0, 0.5};
  c.seed = 12;
  const TrainConfig d = io::train_config_from_json(io::to_json(c));
  EXPECT_EQ(io::to_json(c), io::to_json(d));
  EXPECT_EQ(d.network.hidden, c.network.hidden);
  EXPECT_FALSE(d.network.height_input);
  json bad = io::to_json(c);
  bad["network"]["activation"] = "relu";
  EXPECT_THROW(io::train_config_from_json(bad), io::FormatError);
  bad = io::to_json(c);
  bad["alpha_samples"] = json::array({2.0});
  EXPECT_THROW(io::train_config_from_json(bad), io::FormatError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  NetworkConfig c;
  c.hidden = {9, 5};
  c.k = 3;
  c.activation = Activation::sine;
  c.sine_omega = 7.5;
  c.normalization = {-2, 3, 0.5, 4};
  c.height_input = false;
  const NeuralBasis net = NeuralBasis::initialized(c, 8, 1.0);
  const auto dir = temp_dir("ckpt");
  io::save_checkpoint(dir / "a.wlck", net, {{"steps", 10}});
  json training;
  const NeuralBasis back = io::load_checkpoint(dir / "a.wlck", &training);
  EXPECT_EQ(back.parameters(), net.parameters());
  EXPECT_EQ(back.layer_dims(), net.layer_dims());
  EXPECT_EQ(back.checksum(), net.checksum());
  EXPECT_EQ(back.config().sine_omega, 7.5);
  EXPECT_FALSE(back.config().height_input);
  EXPECT_EQ(back.config().normalization.ymax, 4.0);
  EXPECT_EQ(training["steps"], 10);
  const LiftedPoint p{0.3, 0.1, 1.2, 0.4};
  EXPECT_EQ(forward(net, p), forward(back, p));
}

TEST(Checkpoint, LayoutIsLittleEndian) {
  NetworkConfig c;
  c.hidden = {};
  c.k = 1;
  NeuralBasis net(c);
  net.parameters()[0] = 1.0;
  const std::string bytes = io::encode_checkpoint(net);
  ASSERT_EQ(bytes.substr(0, 4), "WLCK");
  std::uint64_t hlen = 0;
  for (int b = 0; b < 8; ++b) hlen |= std::uint64_t(static_cast<unsigned char>(bytes[4 + b])) << (8 * b);
  const json header = json::parse(bytes.substr(12, hlen));
  EXPECT_EQ(header["format_version"], 1);
  EXPECT_EQ(header["layer_dims"], json::array({4, 3}));
  EXPECT_EQ(bytes.size(), 12 + hlen + 8 * 15);
  // 1.0 = 0x3FF0000000000000, least significant byte first.
  const std::string first = bytes.substr(12 + hlen, 8);
  EXPECT_EQ(first, std::string("\0\0\0\0\0\0\xF0\x3F", 8));
}

TEST(Checkpoint, CorruptionIsDetected) {
  NetworkConfig c;
  c.hidden = {4};
  c.k = 1;
  const std::string good = io::encode_checkpoint(NeuralBasis::initialized(c, 1, 1.0));
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_THROW(io::decode_checkpoint(bad), io::FormatError);
  EXPECT_THROW(io::decode_checkpoint(good.substr(0, good.size() - 8)), io::FormatError);
  EXPECT_THROW(io::decode_checkpoint(good.substr(0, 20)), io::FormatError);
  bad = good;
  bad[bad.size() - 3] ^= 0x10;
  EXPECT_THROW(io::decode_checkpoint(bad), io::FormatError);
  EXPECT_NO_THROW(io::decode_checkpoint(good));
}

TEST(Dataset, RoundTrip) {
  const SnapshotDataset ds = make_rigid_separation_dataset({.snapshots = 3, .points_per_snapshot = 20, .seed = 4});
  const auto dir = temp_dir("dataset");
  io::save_dataset(dir, ds);
  const SnapshotDataset back = io::load_dataset(dir);
  ASSERT_EQ(back.snapshots.size(), 3u);
  EXPECT_EQ(back.curve.polylines(), ds.curve.polylines());
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(back.snapshots[j].alpha, ds.snapshots[j].alpha);
    EXPECT_EQ(back.snapshots[j].points, ds.snapshots[j].points);
    EXPECT_EQ(back.snapshots[j].displacements, ds.snapshots[j].displacements);
  }
  EXPECT_EQ(std::filesystem::file_size(dir / "snapshot_00000.bin"), 20u * 40u);
  std::filesystem::resize_file(dir / "snapshot_00001.bin", 100);
  EXPECT_THROW(io::load_dataset(dir), io::FormatError);
}

TEST(Raster, ClosedSquareInteriorIsOne) {
  const CutCurve square({{{0.25, 0.25}, {0.75, 0.25}, {0.75, 0.75}, {0.25, 0.75}, {0.25, 0.25}}}, 1.0);
  const WindingField f(square, default_tip_radius(Polygon::rectangle({0, 0}, {1, 1})));
  const io::FieldRaster r = io::rasterize_winding(f, {0, 0}, {1, 1}, 64);
  int interior = 0;
  for (int j = 0; j < 64; ++j) {
    for (int i = 0; i < 64; ++i) {
      const Point2 c = r.cell_center(i, j);
      const bool inside = c.x() > 0.25 && c.x() < 0.75 && c.y() > 0.25 && c.y() < 0.75;
      const bool outside = c.x() < 0.25 || c.x() > 0.75 || c.y() < 0.25 || c.y() > 0.75;
      if (inside) {
        EXPECT_NEAR(r.at(i, j), 1.0, 1e-6);
        ++interior;
      } else if (outside) {
        EXPECT_NEAR(r.at(i, j), 0.0, 1e-6);
      }
    }
  }
  EXPECT_EQ(interior, 32 * 32);
  const io::FieldRaster back = io::raster_from_csv(io::raster_to_csv(r));
  EXPECT_EQ(back.values, r.values);
  EXPECT_EQ(back.nx, 64);
}
