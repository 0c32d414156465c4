#include "bapose/dataio.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "bapose/config.h"
#include "bapose/error.h"

namespace bapose {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw FormatError(where + ": " + what);
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(where, "non-finite number");
  return d;
}

int integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected an integer");
  const auto i = v.get<long long>();
  if (i < INT32_MIN || i > INT32_MAX) fail(where, "integer out of range");
  return static_cast<int>(i);
}

const json& list(const json& v, const std::string& where) {
  if (!v.is_array()) fail(where, "expected a list");
  return v;
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

// ---- annotations ----------------------------------------------------------

std::string Dataset::source() const {
  for (const auto& im : images) {
    if (im.crowd_index) return "crowdpose";
  }
  return "coco";
}

const ImageRecord* Dataset::find_image(int id) const {
  for (const auto& im : images) {
    if (im.id == id) return &im;
  }
  return nullptr;
}

std::vector<PersonAnnotation> Dataset::people_in(int image_id) const {
  std::vector<PersonAnnotation> out;
  for (const auto& a : annotations) {
    if (a.image_id == image_id) out.push_back(a);
  }
  return out;
}

Dataset parse_annotations(std::string_view text) {
  const json root = parse_json(text, "annotation file");
  if (!root.is_object()) fail("annotation file", "expected a JSON object");
  Dataset d;

  const json& cats = list(field(root, "categories", "annotation file"),
                          "categories");
  if (cats.empty()) fail("categories", "no category defined");
  const json& cat = cats.front();
  const json& names = list(field(cat, "keypoints", "categories[0]"),
                           "categories[0].keypoints");
  for (const auto& n : names) {
    if (!n.is_string()) fail("categories[0].keypoints", "expected strings");
    d.keypoint_names.push_back(n.get<std::string>());
  }
  if (d.keypoint_names.empty()) fail("categories[0]", "no keypoint names");
  const int k = d.keypoints();
  if (const auto sk = cat.find("skeleton"); sk != cat.end()) {
    for (const auto& e : list(*sk, "categories[0].skeleton")) {
      const std::string where = "categories[0].skeleton";
      if (!e.is_array() || e.size() != 2) fail(where, "expected [a, b] pairs");
      const int a = integer(e[0], where) - 1, b = integer(e[1], where) - 1;
      if (a < 0 || b < 0 || a >= k || b >= k) fail(where, "joint out of range");
      d.skeleton.emplace_back(a, b);
    }
  }

  const json& images = list(field(root, "images", "annotation file"), "images");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    const json& im = images[i];
    ImageRecord r;
    r.id = integer(field(im, "id", where), where + ".id");
    const json& fname = field(im, "file_name", where);
    if (!fname.is_string()) fail(where + ".file_name", "expected a string");
    r.file_name = fname.get<std::string>();
    r.height = integer(field(im, "height", where), where + ".height");
    r.width = integer(field(im, "width", where), where + ".width");
    if (r.height < 1 || r.width < 1) fail(where, "extents must be positive");
    if (const auto c = im.find("crowd_index"); c != im.end()) {
      r.crowd_index = number(*c, where + ".crowd_index");
      if (*r.crowd_index < 0 || *r.crowd_index > 1) {
        fail(where + ".crowd_index", "must lie in [0, 1]");
      }
    }
    if (d.find_image(r.id)) fail(where, "duplicate image id " + std::to_string(r.id));
    d.images.push_back(std::move(r));
  }

  const json& anns = list(field(root, "annotations", "annotation file"),
                          "annotations");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    std::string where = "annotations[" + std::to_string(i) + "]";
    const json& a = anns[i];
    PersonAnnotation p;
    p.id = integer(field(a, "id", where), where + ".id");
    where += " (id " + std::to_string(p.id) + ")";
    p.image_id = integer(field(a, "image_id", where), where + ".image_id");
    if (!d.find_image(p.image_id)) {
      fail(where, "unknown image_id " + std::to_string(p.image_id));
    }
    p.area = number(field(a, "area", where), where + ".area");
    const json& bbox = list(field(a, "bbox", where), where + ".bbox");
    if (bbox.size() != 4) fail(where + ".bbox", "expected 4 numbers");
    for (int j = 0; j < 4; ++j) p.bbox[j] = number(bbox[j], where + ".bbox");
    const json& kps = list(field(a, "keypoints", where), where + ".keypoints");
    if (kps.size() != static_cast<std::size_t>(3 * k)) {
      fail(where, "keypoints has " + std::to_string(kps.size()) +
                      " values, expected " + std::to_string(3 * k));
    }
    for (int j = 0; j < k; ++j) {
      Keypoint kp;
      kp.x = number(kps[3 * j], where + ".keypoints");
      kp.y = number(kps[3 * j + 1], where + ".keypoints");
      const double v = number(kps[3 * j + 2], where + ".keypoints");
      if (v != 0 && v != 1 && v != 2) {
        fail(where, "visibility of keypoint " + std::to_string(j) +
                        " must be 0, 1 or 2");
      }
      kp.v = static_cast<int>(v);
      p.keypoints.push_back(kp);
    }
    if (p.labeled_count() > 0 && !(p.area > 0)) {
      fail(where, "area must be positive when keypoints are labeled");
    }
    d.annotations.push_back(std::move(p));
  }
  return d;
}

std::string serialize_annotations(const Dataset& d) {
  json images = json::array();
  for (const auto& im : d.images) {
    json r = {{"id", im.id},
              {"file_name", im.file_name},
              {"height", im.height},
              {"width", im.width}};
    if (im.crowd_index) r["crowd_index"] = *im.crowd_index;
    images.push_back(std::move(r));
  }
  json anns = json::array();
  for (const auto& a : d.annotations) {
    json kps = json::array();
    for (const auto& k : a.keypoints) {
      kps.push_back(k.x);
      kps.push_back(k.y);
      kps.push_back(k.v);
    }
    anns.push_back({{"id", a.id},
                    {"image_id", a.image_id},
                    {"category_id", 1},
                    {"area", a.area},
                    {"bbox", {a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3]}},
                    {"keypoints", std::move(kps)}});
  }
  json cat = {{"id", 1}, {"name", "person"}, {"keypoints", d.keypoint_names}};
  if (!d.skeleton.empty()) {
    json sk = json::array();
    for (const auto& [a, b] : d.skeleton) sk.push_back({a + 1, b + 1});
    cat["skeleton"] = std::move(sk);
  }
  json root = {{"images", std::move(images)},
               {"annotations", std::move(anns)},
               {"categories", json::array({std::move(cat)})}};
  return root.dump(1) + "\n";
}

// ---- results --------------------------------------------------------------

std::vector<ImageResult> parse_results(std::string_view text, int keypoints) {
  const json root = parse_json(text, "results file");
  const json& items = list(root, "results file");
  std::vector<ImageResult> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string where = "results[" + std::to_string(i) + "]";
    const json& r = items[i];
    ImageResult res;
    res.image_id = integer(field(r, "image_id", where), where + ".image_id");
    const json& kps = list(field(r, "keypoints", where), where + ".keypoints");
    if (kps.empty() || kps.size() % 3 != 0) {
      fail(where, "keypoints must hold x, y, score triplets");
    }
    const int k = static_cast<int>(kps.size() / 3);
    if (keypoints < 0) keypoints = k;
    if (k != keypoints) {
      fail(where, "has " + std::to_string(k) + " keypoints, expected " +
                      std::to_string(keypoints));
    }
    for (int j = 0; j < k; ++j) {
      ScoredKeypoint kp;
      kp.x = number(kps[3 * j], where + ".keypoints");
      kp.y = number(kps[3 * j + 1], where + ".keypoints");
      kp.score = number(kps[3 * j + 2], where + ".keypoints");
      if (kp.score < 0 || kp.score > 1) {
        fail(where, "keypoint score outside [0, 1]");
      }
      res.pose.keypoints.push_back(kp);
    }
    res.pose.score = number(field(r, "score", where), where + ".score");
    if (res.pose.score < 0 || res.pose.score > 1) {
      fail(where + ".score", "outside [0, 1]");
    }
    out.push_back(std::move(res));
  }
  return out;
}

std::string serialize_results(const std::vector<ImageResult>& results) {
  json root = json::array();
  for (const auto& r : results) {
    json kps = json::array();
    for (const auto& k : r.pose.keypoints) {
      kps.push_back(k.x);
      kps.push_back(k.y);
      kps.push_back(k.score);
    }
    root.push_back({{"image_id", r.image_id},
                    {"category_id", 1},
                    {"keypoints", std::move(kps)},
                    {"score", r.pose.score}});
  }
  return root.dump(1) + "\n";
}

// ---- raw tensors ----------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::size_t& pos, const char* what)
      : bytes_(bytes), pos_(pos), what_(what) {}

  void need(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string(what_) + ": truncated at byte " +
                        std::to_string(pos_));
    }
  }
  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += width;
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  std::size_t& pos_;
  const char* what_;
};

}  // namespace

std::string write_tensor(const Tensor& t) {
  std::string out = "BAT1";
  out.reserve(20 + 4 * t.size());
  const Shape& s = t.shape();
  for (int e : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(e));
  for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor read_tensor_at(std::string_view bytes, std::size_t& pos) {
  Reader r(bytes, pos, "tensor dump");
  if (r.take(4) != "BAT1") throw FormatError("tensor dump: bad magic");
  std::uint64_t ext[4];
  std::uint64_t count = 1;
  for (auto& e : ext) {
    e = r.uint(4);
    if (e > INT32_MAX) throw FormatError("tensor dump: extent too large");
    count *= e;
    if (count > (bytes.size() - pos) / 4 + 1) {
      throw FormatError("tensor dump: payload shorter than extents require");
    }
  }
  r.need(4 * count);
  std::vector<float> values(count);
  for (auto& v : values) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4)));
  return Tensor(Shape{int(ext[0]), int(ext[1]), int(ext[2]), int(ext[3])},
                std::move(values));
}

Tensor read_tensor(std::string_view bytes) {
  std::size_t pos = 0;
  Tensor t = read_tensor_at(bytes, pos);
  if (pos != bytes.size()) {
    throw FormatError("tensor dump: " + std::to_string(bytes.size() - pos) +
                      " trailing bytes");
  }
  return t;
}

// ---- images ---------------------------------------------------------------

Tensor read_image_ppm(std::string_view b) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(b[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto header_int = [&](const char* what) {
    skip_space();
    long v = 0;
    std::size_t digits = 0;
    while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos])) &&
           digits < 9) {
      v = v * 10 + (b[pos++] - '0');
      ++digits;
    }
    if (digits == 0) throw FormatError(std::string("ppm: bad ") + what);
    return v;
  };
  if (b.substr(0, 2) != "P6") {
    throw FormatError("ppm: only binary P6 images are supported");
  }
  pos = 2;
  const long w = header_int("width"), h = header_int("height");
  const long maxval = header_int("maxval");
  if (w < 1 || h < 1) throw FormatError("ppm: empty image");
  if (maxval != 255) {
    throw FormatError("ppm: maxval must be 255, got " + std::to_string(maxval));
  }
  if (pos >= b.size() || !std::isspace(static_cast<unsigned char>(b[pos]))) {
    throw FormatError("ppm: malformed header");
  }
  ++pos;
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  if (b.size() - pos < 3 * plane) throw FormatError("ppm: truncated pixel data");
  Tensor t(1, 3, static_cast<int>(h), static_cast<int>(w));
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      t[c * plane + i] =
          static_cast<unsigned char>(b[pos + 3 * i + c]) / 255.0f;
    }
  }
  return t;
}

std::string write_image_ppm(const Tensor& image) {
  if (image.n() != 1 || image.c() != 3) {
    throw ShapeError("write_image_ppm: expected (1,3,H,W), got " +
                     image.shape().str());
  }
  std::string out = "P6\n" + std::to_string(image.w()) + " " +
                    std::to_string(image.h()) + "\n255\n";
  const std::size_t plane = image.shape().plane();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(image[c * plane + i], 0.0f, 1.0f);
      out.push_back(static_cast<char>(std::lround(v * 255.0f)));
    }
  }
  return out;
}

// ---- checkpoints ----------------------------------------------------------

std::string save_checkpoint(const Checkpoint& c, const ModelConfig& cfg) {
  std::vector<std::pair<std::string, const Tensor*>> entries;
  c.model.visit([&](const std::string& name, const Tensor& t) {
    entries.emplace_back(name, &t);
  });
  const std::size_t params = entries.size();
  if (c.optim.m.size() != params || c.optim.v.size() != params) {
    throw ShapeError("save_checkpoint: optimizer state does not mirror the "
                     "weight set");
  }
  for (std::size_t i = 0; i < params; ++i) {
    entries.emplace_back("adam.m/" + entries[i].first, &c.optim.m[i]);
  }
  for (std::size_t i = 0; i < params; ++i) {
    entries.emplace_back("adam.v/" + entries[i].first, &c.optim.v[i]);
  }
  std::string out = "BAC1";
  put_u32(out, kCheckpointVersion);
  put_u64(out, model_fingerprint(cfg));
  put_u32(out, static_cast<std::uint32_t>(c.epoch));
  put_u64(out, c.optim.step);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out += write_tensor(*t);
  }
  return out;
}

Checkpoint load_checkpoint(std::string_view bytes, const ModelConfig& cfg) {
  std::size_t pos = 0;
  Reader r(bytes, pos, "checkpoint");
  if (r.take(4) != "BAC1") throw FormatError("checkpoint: bad magic");
  const auto version = r.uint(4);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: format version " + std::to_string(version) +
                      ", this build reads version " +
                      std::to_string(kCheckpointVersion));
  }
  const auto fp = r.uint(8);
  if (fp != model_fingerprint(cfg)) {
    throw ConfigError(
        "checkpoint was written for a different model configuration "
        "(fingerprint mismatch); check the backbone.* and dwasp.* settings");
  }
  Checkpoint c{Model<float>::zeros(cfg), {}, 0};
  c.epoch = static_cast<int>(r.uint(4));
  c.optim = OptimState::zeros_like(c.model);
  c.optim.step = r.uint(8);

  std::vector<std::pair<std::string, Tensor*>> slots;
  c.model.visit([&](const std::string& name, Tensor& t) {
    slots.emplace_back(name, &t);
  });
  const std::size_t params = slots.size();
  for (std::size_t i = 0; i < params; ++i) {
    slots.emplace_back("adam.m/" + slots[i].first, &c.optim.m[i]);
  }
  for (std::size_t i = 0; i < params; ++i) {
    slots.emplace_back("adam.v/" + slots[i].first, &c.optim.v[i]);
  }
  const auto count = r.uint(4);
  if (count != slots.size()) {
    throw FormatError("checkpoint: " + std::to_string(count) +
                      " entries, expected " + std::to_string(slots.size()));
  }
  for (auto& [name, dst] : slots) {
    const auto len = r.uint(4);
    const std::string_view got = r.take(len);
    if (got != name) {
      throw FormatError("checkpoint: expected entry '" + name + "', found '" +
                        std::string(got) + "'");
    }
    Tensor t = read_tensor_at(bytes, pos);
    if (t.shape() != dst->shape()) {
      throw FormatError("checkpoint: entry '" + name + "' has shape " +
                        t.shape().str() + ", expected " +
                        dst->shape().str());
    }
    *dst = std::move(t);
  }
  if (pos != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

// ---- files ----------------------------------------------------------------

Tensor pad_image(const Tensor& image, int multiple) {
  if (multiple <= 0) throw ShapeError("pad_image: multiple must be positive");
  const int h = (image.h() + multiple - 1) / multiple * multiple;
  const int w = (image.w() + multiple - 1) / multiple * multiple;
  if (h == image.h() && w == image.w()) return image;
  Tensor out(image.n(), image.c(), h, w);
  for (int n = 0; n < image.n(); ++n)
    for (int c = 0; c < image.c(); ++c)
      for (int y = 0; y < image.h(); ++y)
        for (int x = 0; x < image.w(); ++x) out(n, c, y, x) = image(n, c, y, x);
  return out;
}

std::vector<TrainSample> load_training_set(const Dataset& d,
                                           const std::string& dir,
                                           int multiple) {
  std::vector<TrainSample> out;
  for (const auto& rec : d.images) {
    const std::string path = dir + "/" + rec.file_name;
    Tensor img = read_image_ppm(read_file(path));
    if (img.h() != rec.height || img.w() != rec.width) {
      std::ostringstream os;
      os << path << ": image is " << img.w() << "x" << img.h()
         << " but the annotations say " << rec.width << "x" << rec.height;
      throw FormatError(os.str());
    }
    out.push_back({pad_image(img, multiple), d.people_in(rec.id)});
  }
  return out;
}

std::vector<ImageEval> join_results(const Dataset& d,
                                    const std::vector<ImageResult>& results) {
  std::vector<ImageEval> out;
  std::map<int, std::size_t> slot;
  for (const auto& rec : d.images) {
    slot[rec.id] = out.size();
    ImageEval im;
    im.image_id = rec.id;
    im.crowd_index = rec.crowd_index;
    im.gts = d.people_in(rec.id);
    out.push_back(std::move(im));
  }
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto it = slot.find(results[i].image_id);
    if (it == slot.end()) {
      throw FormatError("results[" + std::to_string(i) + "]: image_id " +
                        std::to_string(results[i].image_id) +
                        " is not in the dataset");
    }
    out[it->second].preds.push_back(results[i].pose);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path);
}

}  // namespace bapose
