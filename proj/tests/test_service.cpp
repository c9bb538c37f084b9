#include <windlift/server.hpp>
#include <windlift/service.hpp>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include <random>
#include <thread>

using namespace windlift;
using nlohmann::json;

namespace {

io::SceneSpec test_scene() {
  return io::scene_from_json(json::parse(R"({
    "format": 1,
    "domain": {"outer": [[0, 0], [1, 0], [1, 1], [0, 1]]},
    "material": {"mu": 100.0, "lambda": 50.0, "density": 1.0, "thickness": 0.1},
    "gravity": [0, 0, -9.8],
    "pinned": [{"type": "rect", "min": [0, 0.9], "max": [1, 1]}],
    "pin_spacing": 0.1,
    "cuts": {"polylines": [[[0.5, -0.05], [0.5, 0.6]]], "alpha": 0.0},
    "cubature": {"n": 200, "seed": 1}
  })"));
}

std::shared_ptr<const NeuralBasis> test_basis() {
  NetworkConfig c;
  c.hidden = {16, 16};
  c.k = 3;
  c.normalization = {0, 1, 0, 1};
  return std::make_shared<const NeuralBasis>(NeuralBasis::initialized(c, 5, 0.3));
}

SimulationService make_service(bool reference = true) {
  return SimulationService(test_basis(), test_scene(), {.stride = 1, .reference_mode = reference});
}

}  // namespace

TEST(Service, InitFrameIsRest) {
  SimulationService svc = make_service();
  const json f = svc.handle({{"type", "init"}});
  ASSERT_EQ(f["type"], "state");
  const auto& pts = svc.simulator().scene().cubature.points;
  ASSERT_EQ(f["positions"].size(), 3 * pts.size());
  for (std::size_t p = 0; p < pts.size(); ++p) {
    EXPECT_EQ(f["positions"][3 * p].get<double>(), pts[p].x());
    EXPECT_EQ(f["positions"][3 * p + 1].get<double>(), pts[p].y());
    EXPECT_EQ(f["positions"][3 * p + 2].get<double>(), 0.0);
  }
  for (const auto& z : f["z"]) EXPECT_EQ(z.get<double>(), 0.0);
  EXPECT_EQ(f["alpha"], 0.0);
  EXPECT_EQ(f["cuts"].size(), 1u);
}

TEST(Service, FrameIdsStrictlyIncrease) {
  SimulationService svc = make_service();
  std::uint64_t last = 0;
  const std::vector<json> msgs{{{"type", "init"}},
                               {{"type", "step"}, {"n", 3}},
                               {{"type", "query_state"}, {"stride", 10}},
                               {{"type", "set_alpha"}, {"alpha", 0.5}},
                               {{"type", "pause"}},
                               {{"type", "resume"}}};
  for (const json& m : msgs) {
    const json r = svc.handle(m);
    ASSERT_EQ(r["type"], "state") << r.dump();
    EXPECT_GT(r["frame_id"].get<std::uint64_t>(), last);
    last = r["frame_id"].get<std::uint64_t>();
  }
  EXPECT_EQ(svc.handle({{"type", "query_state"}, {"stride", 10}})["stride"], 10);
}

TEST(Service, UnchangedEditIsIdempotent) {
  SimulationService svc = make_service();
  svc.handle({{"type", "step"}, {"n", 5}});
  json before = svc.handle({{"type", "query_state"}});
  json after = svc.handle({{"type", "edit_cut"}, {"polyline_id", 0}, {"vertices", json::parse("[[0.5, -0.05], [0.5, 0.6]]")}});
  ASSERT_EQ(after["type"], "state");
  EXPECT_GT(after["frame_id"], before["frame_id"]);
  before.erase("frame_id");
  after.erase("frame_id");
  EXPECT_EQ(before, after);
}

TEST(Service, CutEditsChangeGeometry) {
  SimulationService svc = make_service();
  json r = svc.handle({{"type", "append_cut_vertex"}, {"polyline_id", 0}, {"vertex", {0.6, 0.8}}});
  ASSERT_EQ(r["type"], "state");
  EXPECT_EQ(r["cuts"][0].size(), 3u);
  r = svc.handle({{"type", "edit_cut"}, {"polyline_id", 1}, {"vertices", json::parse("[[0.1, 0.1], [0.2, 0.3]]")}});
  EXPECT_EQ(r["cuts"].size(), 2u);
  r = svc.handle({{"type", "edit_cut"}, {"polyline_id", 0}, {"vertices", json::array()}});
  EXPECT_EQ(r["cuts"].size(), 1u);
  EXPECT_EQ(svc.simulator().scene().curve.polylines()[0][1], Point2(0.2, 0.3));
  // Invalid edits leave the cut alone.
  r = svc.handle({{"type", "edit_cut"}, {"polyline_id", 0}, {"vertices", json::parse("[[0.1, 0.1]]")}});
  EXPECT_EQ(r["code"], "invalid_cut");
  r = svc.handle({{"type", "edit_cut"}, {"polyline_id", 7}, {"vertices", json::parse("[[0.1, 0.1], [0.3, 0.3]]")}});
  EXPECT_EQ(r["code"], "invalid_message");
  EXPECT_EQ(svc.simulator().scene().curve.polylines().size(), 1u);
}

TEST(Service, MalformedMessagesGetErrors) {
  SimulationService svc = make_service();
  const std::vector<std::string> bad{"",
                                     "{",
                                     "[]",
                                     "42",
                                     R"({"type": 3})",
                                     R"({"type": "teleport"})",
                                     R"({"type": "step", "n": 0})",
                                     R"({"type": "step", "n": "many"})",
                                     R"({"type": "step", "n": 1, "extra": true})",
                                     R"({"type": "set_alpha", "alpha": 2})",
                                     R"({"type": "set_alpha"})",
                                     R"({"type": "poke", "location": [0.5], "force": [0, 0, 1]})",
                                     R"({"type": "poke", "location": [0.5, 0.5], "force": [0, 0, 1], "radius": -1})",
                                     R"({"type": "query_state", "stride": 0})",
                                     R"({"type": "init", "scene": {"format": 9}})",
                                     R"({"type": "append_cut_vertex", "polyline_id": -1, "vertex": [0, 0]})"};
  for (const std::string& text : bad) {
    const json r = svc.handle_text(text);
    EXPECT_EQ(r["type"], "error") << text;
    EXPECT_TRUE(r["code"].is_string());
    EXPECT_TRUE(r["message"].is_string());
  }
  EXPECT_EQ(svc.handle_text(R"({"type": "query_state"})")["type"], "state");
  EXPECT_TRUE(svc.command_log().empty());
}

TEST(Service, FuzzedMessagesNeverThrow) {
  SimulationService svc = make_service();
  const std::vector<std::string> seeds{R"({"type": "step", "n": 2})",
                                       R"({"type": "set_alpha", "alpha": 0.3})",
                                       R"({"type": "edit_cut", "polyline_id": 0, "vertices": [[0.5, 0.1], [0.4, 0.7]]})",
                                       R"({"type": "append_cut_vertex", "polyline_id": 0, "vertex": [0.7, 0.9]})",
                                       R"({"type": "poke", "location": [0.8, 0.2], "force": [0, 0, 5], "radius": 0.2})",
                                       R"({"type": "query_state", "stride": 4})",
                                       R"({"type": "pause"})"};
  std::mt19937_64 rng(99);
  const std::string alphabet = "{}[]\",:0123456789.-eE abcdefghijklmnopqrstuvwxyz_\\\x01\xff";
  for (int trial = 0; trial < 3000; ++trial) {
    std::string text = seeds[rng() % seeds.size()];
    const int edits = 1 + static_cast<int>(rng() % 4);
    for (int e = 0; e < edits && !text.empty(); ++e) {
      const std::size_t pos = rng() % text.size();
      switch (rng() % 3) {
        case 0: text[pos] = alphabet[rng() % alphabet.size()]; break;
        case 1: text.erase(pos, 1 + rng() % 3); break;
        default: text.insert(pos, 1, alphabet[rng() % alphabet.size()]); break;
      }
    }
    json r;
    ASSERT_NO_THROW(r = svc.handle_text(text)) << text;
    ASSERT_TRUE(r["type"] == "state" || r["type"] == "error") << text;
  }
  // Deep nesting and type confusion.
  EXPECT_EQ(svc.handle_text(std::string(100000, '['))["type"], "error");
  EXPECT_EQ(svc.handle({{"type", "poke"}, {"location", {{"x", 1}}}, {"force", nullptr}})["type"], "error");
  EXPECT_EQ(svc.handle_text(std::string(2 << 20, ' '))["code"], "message_too_large");
  EXPECT_EQ(svc.handle({{"type", "query_state"}})["type"], "state");
}

TEST(Service, ReplayReproducesFrames) {
  SimulationService a = make_service();
  std::vector<json> frames;
  const std::vector<json> session{{{"type", "init"}},
                                  {{"type", "step"}, {"n", 4}},
                                  {{"type", "poke"}, {"location", {0.8, 0.3}}, {"force", {0, 0, 20}}, {"radius", 0.2}, {"steps", 3}},
                                  {{"type", "query_state"}},
                                  {{"type", "step"}, {"n", 2}},
                                  {{"type", "set_alpha"}, {"alpha", 0.7}},
                                  {{"type", "edit_cut"}, {"polyline_id", 0}, {"vertices", json::parse("[[0.5, -0.05], [0.45, 0.7]]")}},
                                  {{"type", "step"}, {"n", 5}},
                                  {{"type", "pause"}},
                                  {{"type", "step"}, {"n", 1}}};
  for (const json& m : session) {
    const json r = a.handle(m);
    if (m["type"] != "query_state") frames.push_back(r);
  }
  SimulationService b = make_service();
  const std::vector<json> replayed = replay(b, a.command_log());
  ASSERT_EQ(replayed.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    json x = frames[i], y = replayed[i];
    x.erase("frame_id");
    y.erase("frame_id");
    EXPECT_EQ(x, y) << "frame " << i;
  }
  EXPECT_EQ(a.state().z, b.state().z);
}

TEST(Service, PokeActsForRequestedSteps) {
  SimulationService svc = make_service();
  svc.handle({{"type", "poke"}, {"location", {0.8, 0.3}}, {"force", {0, 0, 50}}, {"radius", 0.3}, {"steps", 2}});
  svc.handle({{"type", "step"}, {"n", 5}});

  const ReducedSimulator sim(test_basis(), io::build_scene(test_scene()));
  const std::vector<PokeForce> poke{{{0.8, 0.3}, {0, 0, 50}, 0.3}};
  ReducedState st = sim.rest_state();
  for (int j = 0; j < 5; ++j) st = (j < 2 ? sim.step(st, poke) : sim.step(st)).state;
  EXPECT_EQ(svc.state().z, st.z);
}

TEST(Service, SolverFailurePauses) {
  SimulationService svc = make_service();
  svc.handle({{"type", "poke"}, {"location", {0.5, 0.5}}, {"force", {0, 0, 1e308}}, {"radius", 0.5}});
  const json r = svc.handle({{"type", "step"}, {"n", 1}});
  EXPECT_EQ(r["type"], "error");
  EXPECT_EQ(r["code"], "solver_failure");
  EXPECT_TRUE(svc.paused());
  EXPECT_TRUE(svc.tick().is_null());
  EXPECT_TRUE(svc.state().z.isZero(0.0));
}

TEST(Service, TickFollowsPauseState) {
  SimulationService svc = make_service();
  const json f = svc.tick();
  ASSERT_EQ(f["type"], "state");
  EXPECT_EQ(f["step"], 1);
  svc.handle({{"type", "pause"}});
  EXPECT_TRUE(svc.tick().is_null());
  svc.handle({{"type", "resume"}});
  EXPECT_EQ(svc.tick()["step"], 2);
}

namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;

struct Client {
  net::io_context ioc;
  websocket::stream<net::ip::tcp::socket> ws{ioc};

  explicit Client(unsigned short port) {
    net::ip::tcp::resolver resolver(ioc);
    net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/");
  }

  json request(const std::string& text) {
    ws.write(net::buffer(text));
    return receive();
  }

  json receive() {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }
};

}  // namespace

TEST(WebSocketServer, RoundTrip) {
  SimulationService svc = make_service();
  WebSocketServer server(svc, {.address = "127.0.0.1", .port = 0, .autoplay = false});
  const unsigned short port = server.port();
  std::thread loop([&] { server.run(); });
  {
    Client c(port);
    json r = c.request(R"({"type": "init"})");
    EXPECT_EQ(r["type"], "state");
    r = c.request(R"({"type": "step", "n": 3})");
    EXPECT_EQ(r["step"], 3);
    r = c.request("not json");
    EXPECT_EQ(r["code"], "parse_error");
    r = c.request(R"({"type": "query_state", "stride": 50})");
    EXPECT_EQ(r["positions"].size(), 3u * 4u);

    Client second(port);
    EXPECT_EQ(second.receive()["code"], "busy");
  }
  server.stop();
  loop.join();
  EXPECT_EQ(svc.step_count(), 3u);
}

TEST(WebSocketServer, AutoplayBroadcastsFrames) {
  SimulationService svc = make_service();
  WebSocketServer server(svc, {.address = "127.0.0.1", .port = 0, .autoplay = true, .broadcast_hz = 100.0});
  std::thread loop([&] { server.run(); });
  {
    Client c(server.port());
    std::uint64_t last = 0;
    for (int i = 0; i < 5; ++i) {
      const json f = c.receive();
      ASSERT_EQ(f["type"], "state");
      EXPECT_GT(f["frame_id"].get<std::uint64_t>(), last);
      last = f["frame_id"].get<std::uint64_t>();
    }
  }
  server.stop();
  loop.join();
  EXPECT_GE(svc.step_count(), 5u);
}
