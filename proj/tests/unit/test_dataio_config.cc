#include <doctest.h>

#include <cstring>
#include <string>

#include "bapose/checks/criteria.h"
#include "bapose/checks/gradcheck.h"
#include "bapose/checks/oracles.h"
#include "bapose/config.h"
#include "bapose/dataio.h"

using namespace bapose;

namespace {

std::string minimal_annotations(int values, double score_field = 2) {
  std::string kps;
  for (int i = 0; i < values; ++i) {
    if (i) kps += ",";
    kps += (i % 3 == 2) ? std::to_string(static_cast<int>(score_field))
                        : std::to_string(10 + i);
  }
  return R"({"images":[{"id":7,"file_name":"a.ppm","height":64,"width":48}],)"
         R"("annotations":[{"id":3,"image_id":7,"area":100,"bbox":[1,2,3,4],)"
         R"("keypoints":[)" + kps + R"(]}],)"
         R"("categories":[{"name":"person","keypoints":["a","b","c","d","e",)"
         R"("f","g","h","i","j","k","l","m","n","o","p","q"],)"
         R"("skeleton":[[1,2],[2,3]]}]})";
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("annotation file with one person") {
  const Dataset d = parse_annotations(minimal_annotations(51));
  CHECK(d.keypoints() == 17);
  REQUIRE(d.annotations.size() == 1);
  CHECK(d.annotations[0].id == 3);
  CHECK(d.annotations[0].keypoints[1].x == 13);
  CHECK(d.annotations[0].labeled_count() == 17);
  CHECK(d.skeleton == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
  CHECK(d.source() == "coco");
  CHECK(d.find_image(7)->width == 48);
  CHECK(d.find_image(8) == nullptr);
}

TEST_CASE("annotation arity error names the annotation") {
  const std::string msg = error_of([] { parse_annotations(minimal_annotations(50)); });
  CHECK(msg.find("3") != std::string::npos);
  CHECK(msg.find("51") != std::string::npos);
  CHECK_THROWS_AS(parse_annotations(minimal_annotations(50)), FormatError);
  CHECK_THROWS_AS(parse_annotations(minimal_annotations(51, 3)), FormatError);
  CHECK_THROWS_AS(parse_annotations("{"), FormatError);
  CHECK_THROWS_AS(parse_annotations("[]"), FormatError);
}

TEST_CASE("annotation round trip") {
  Dataset d = parse_annotations(minimal_annotations(51));
  d.images[0].crowd_index = 0.4;
  d.annotations[0].keypoints[4].v = 0;
  const std::string text = serialize_annotations(d);
  const Dataset e = parse_annotations(text);
  CHECK(serialize_annotations(e) == text);
  CHECK(e.images[0].crowd_index == 0.4);
  CHECK(e.source() == "crowdpose");
  CHECK(e.annotations[0].keypoints[4].v == 0);
}

TEST_CASE("results files") {
  ImageResult r;
  r.image_id = 7;
  r.pose.score = 0.75;
  r.pose.keypoints = {{1.5, 2.25, 0.5}, {3, 4, 1}};
  const std::string text = serialize_results({r});
  const auto back = parse_results(text, 2);
  REQUIRE(back.size() == 1);
  CHECK(back[0].pose.keypoints[0].y == 2.25);
  CHECK(serialize_results(back) == text);
  CHECK(parse_results(serialize_results({})).empty());
  CHECK_THROWS_AS(parse_results(text, 3), FormatError);
  r.pose.score = 1.5;
  CHECK_THROWS_AS(parse_results(serialize_results({r})), FormatError);
}

TEST_CASE("tensor dumps") {
  const Tensor one(Shape{1, 1, 1, 1}, std::vector<float>{1.f});
  const std::string b = write_tensor(one);
  CHECK(b.size() == 4 + 16 + 4);
  CHECK(b.substr(0, 4) == "BAT1");
  CHECK(static_cast<unsigned char>(b[4]) == 1);
  CHECK(read_tensor(b) == one);
  CHECK(write_tensor(read_tensor(b)) == b);
  float v;
  std::memcpy(&v, b.data() + 20, 4);
  CHECK(v == 1.f);
  std::string bad = b;
  bad[0] = 'X';
  CHECK_THROWS_AS(read_tensor(bad), FormatError);
  CHECK_THROWS_AS(read_tensor(b.substr(0, 22)), FormatError);
  CHECK_THROWS_AS(read_tensor(b + "x"), FormatError);

  Rng rng(51);
  const Tensor t = oracle::random_tensor<float>({2, 3, 5, 7}, rng);
  const std::string two = write_tensor(t) + write_tensor(one);
  std::size_t pos = 0;
  CHECK(read_tensor_at(two, pos) == t);
  CHECK(read_tensor_at(two, pos) == one);
  CHECK(pos == two.size());
}

TEST_CASE("ppm images") {
  const std::string white = std::string("P6\n1 1\n255\n") + "\xff\xff\xff";
  const Tensor w = read_image_ppm(white);
  CHECK(w.shape() == Shape{1, 3, 1, 1});
  for (float v : w.values()) CHECK(v == 1.f);

  const std::string two = std::string("P6\n2 1\n255\n") +
                          std::string("\xff\x00\x00\x00\x00\xff", 6);
  const Tensor t = read_image_ppm(two);
  CHECK(t(0, 0, 0, 0) == 1.f);
  CHECK(t(0, 0, 0, 1) == 0.f);
  CHECK(t(0, 2, 0, 0) == 0.f);
  CHECK(t(0, 2, 0, 1) == 1.f);
  CHECK(write_image_ppm(t) == two);
  CHECK_THROWS_AS(read_image_ppm("P3\n1 1\n255\n255 255 255\n"), FormatError);
  CHECK_THROWS_AS(read_image_ppm("P6\n2 2\n255\n\x01"), FormatError);
}

TEST_CASE("image padding") {
  const Tensor img(1, 3, 5, 6, 0.5f);
  const Tensor p = pad_image(img, 4);
  CHECK(p.shape() == Shape{1, 3, 8, 8});
  CHECK(p(0, 1, 4, 5) == 0.5f);
  CHECK(p(0, 1, 5, 5) == 0.f);
  CHECK(p(0, 1, 4, 6) == 0.f);
  CHECK(pad_image(p, 4) == p);
  CHECK_THROWS_AS(pad_image(img, 0), ShapeError);
}

TEST_CASE("checkpoints") {
  ModelConfig cfg = check::gradcheck_model_config(3);
  Rng rng(52);
  Checkpoint c{init_model<float>(cfg, 5), {}, 12};
  c.optim = OptimState::zeros_like(c.model);
  c.optim.step = 99;
  for (auto& m : c.optim.m) m = oracle::random_tensor<float>(m.shape(), rng);
  const std::string bytes = save_checkpoint(c, cfg);
  const Checkpoint back = load_checkpoint(bytes, cfg);
  CHECK(back.epoch == 12);
  CHECK(back.optim.step == 99);
  CHECK(save_checkpoint(back, cfg) == bytes);

  ModelConfig other = cfg;
  other.dwasp.keypoints = 2;
  CHECK_THROWS_AS(load_checkpoint(bytes, other), ConfigError);
  CHECK_THROWS_AS(load_checkpoint(bytes.substr(0, bytes.size() - 3), cfg),
                  FormatError);
  CHECK(model_fingerprint(cfg) != model_fingerprint(other));
}

TEST_CASE("joining results to a dataset") {
  const Dataset d = parse_annotations(minimal_annotations(51));
  ImageResult r;
  r.image_id = 7;
  r.pose.keypoints.assign(17, {1, 1, 1});
  const auto ims = join_results(d, {r});
  REQUIRE(ims.size() == 1);
  CHECK(ims[0].gts.size() == 1);
  CHECK(ims[0].preds.size() == 1);
  r.image_id = 8;
  CHECK_THROWS_AS(join_results(d, {r}), FormatError);
}

TEST_CASE("missing files") {
  CHECK_THROWS_AS(read_file("/nonexistent/file.json"), FormatError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), FormatError);
}

TEST_CASE("config parsing") {
  const RunConfig r = parse_run_config(
      "# comment\n"
      "dwasp.dilations = 1, 2, 3, 4   # trailing\n"
      "\n"
      "train.lr = 0.01\n"
      "dwasp.offset_mode = shared\n");
  CHECK(r.model.dwasp.dilations == std::array<int, 4>{1, 2, 3, 4});
  CHECK(r.train.lr == 0.01);
  CHECK(r.model.dwasp.offset_mode == OffsetMode::kShared);
  CHECK(r.train.epochs == TrainConfig{}.epochs);

  const std::string unknown = error_of([] { parse_run_config("\ntrain.lrr = 1\n"); });
  CHECK(unknown.find("line 2") != std::string::npos);
  CHECK(unknown.find("train.lrr") != std::string::npos);
  const std::string dup =
      error_of([] { parse_run_config("train.lr = 1\ntrain.lr = 2\n"); });
  CHECK(dup.find("line 2") != std::string::npos);
  CHECK(dup.find("line 1") != std::string::npos);
  CHECK_THROWS_AS(parse_run_config("train.lr 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("train.epochs = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("dwasp.dilations = 1,2\n"), ConfigError);
}

TEST_CASE("canonical config round trip") {
  RunConfig r = check::toy_problem().config;
  const std::string text = canonical_config(r);
  CHECK(canonical_config(parse_run_config(text)) == text);
  RunConfig d;
  CHECK(canonical_config(parse_run_config(canonical_config(d))) == canonical_config(d));
}

TEST_CASE("shipped toy config equals the built-in toy problem") {
  const RunConfig file = load_run_config(BAPOSE_SOURCE_DIR "/configs/toy.cfg");
  CHECK(canonical_config(file) == canonical_config(check::toy_problem().config));
  for (const char* name : {"coco", "crowdpose"}) {
    const RunConfig c =
        load_run_config(std::string(BAPOSE_SOURCE_DIR "/configs/") + name + ".cfg");
    CHECK_NOTHROW(c.require_oks());
    CHECK(static_cast<int>(c.eval.oks.falloff.size()) == c.model.dwasp.keypoints);
  }
}

TEST_CASE("oks table is required where similarity is computed") {
  CHECK_THROWS_AS(RunConfig{}.require_oks(), ConfigError);
}

TEST_CASE("model fingerprint covers only the architecture") {
  RunConfig a, b;
  b.train.lr = 0.5;
  b.decode.max_instances = 3;
  CHECK(model_fingerprint(a.model) == model_fingerprint(b.model));
  b.model.dwasp.dilations = {1, 6, 12, 24};
  CHECK(model_fingerprint(a.model) != model_fingerprint(b.model));
  CHECK(canonical_model_config(a.model).find("train.") == std::string::npos);
}
