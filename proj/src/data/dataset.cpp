// SPDX-License-Identifier: Apache-2.0
#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "data/png_io.hpp"
#include "model/cc_decoder.hpp"
#include "tensor/errors.hpp"
#include "tensor/rng.hpp"

namespace semcc {

namespace fs = std::filesystem;

namespace {

constexpr int kLattice = 4;
constexpr int kMaxCount[3] = {3, 2, 5};

const char* kSingular[3] = {"building", "road", "tree"};
const char* kPlural[3] = {"buildings", "roads", "trees"};
const char* kBuiltVerb[3] = {"built", "constructed", "planted"};

const std::vector<std::string> kNoChange = {
    "the scene is the same as before",
    "there is no change",
    "no difference exists between the two scenes",
    "nothing has changed",
    "the two scenes seem identical",
};

struct Occupancy {
  int units;
  std::vector<std::uint8_t> cells;
  explicit Occupancy(int u) : units(u), cells(static_cast<std::size_t>(u) * u, 0) {}

  // Free including a one-unit margin around the footprint.
  bool free(int ux, int uy, int uw, int uh) const {
    for (int y = std::max(0, uy - 1); y < std::min(units, uy + uh + 1); ++y) {
      for (int x = std::max(0, ux - 1); x < std::min(units, ux + uw + 1); ++x) {
        if (cells[y * units + x]) return false;
      }
    }
    return true;
  }
  void mark(int ux, int uy, int uw, int uh) {
    for (int y = uy; y < uy + uh; ++y) {
      for (int x = ux; x < ux + uw; ++x) cells[y * units + x] = 1;
    }
  }
};

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

void pick_color(CounterRng& rng, ObjectClass cls, std::uint8_t out[3]) {
  static const int building[4][3] = {{180, 60, 50}, {200, 200, 200}, {70, 90, 160}, {190, 140, 90}};
  const int* base;
  static const int road[3] = {110, 110, 110};
  static const int tree[3] = {30, 100, 40};
  switch (cls) {
    case ObjectClass::kBuilding: base = building[rng.randint(0, 3)]; break;
    case ObjectClass::kRoad: base = road; break;
    default: base = tree; break;
  }
  const int j = cls == ObjectClass::kBuilding ? 10 : 8;
  for (int c = 0; c < 3; ++c) out[c] = clamp_u8(base[c] + rng.randint(-j, j));
}

// Tries to place one object of `cls` inside the unit box [x0,x1) x [y0,y1).
std::optional<SceneObject> place(CounterRng& rng, Occupancy& occ, ObjectClass cls, int x0, int y0, int x1, int y1) {
  const int bw = x1 - x0, bh = y1 - y0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    int uw = 1, uh = 1;
    if (cls == ObjectClass::kBuilding) {
      uw = rng.randint(2, 3);
      uh = rng.randint(2, 3);
      if (attempt >= 32) uw = uh = 2;
    } else if (cls == ObjectClass::kRoad) {
      const bool horizontal = rng.uniform() < 0.5;
      const int len = rng.randint(3, 5);
      (horizontal ? uw : uh) = std::min(len, horizontal ? bw : bh);
    }
    if (uw > bw || uh > bh) continue;
    const int ux = x0 + rng.randint(0, bw - uw);
    const int uy = y0 + rng.randint(0, bh - uh);
    if (!occ.free(ux, uy, uw, uh)) continue;
    occ.mark(ux, uy, uw, uh);
    SceneObject o;
    o.cls = cls;
    o.x = ux * kLattice;
    o.y = uy * kLattice;
    o.w = uw * kLattice;
    o.h = uh * kLattice;
    pick_color(rng, cls, o.color);
    return o;
  }
  return std::nullopt;
}

bool in_footprint(const SceneObject& o, int px, int py) {
  if (px < o.x || px >= o.x + o.w || py < o.y || py >= o.y + o.h) return false;
  if (o.cls != ObjectClass::kTree) return true;
  const double dx = px + 0.5 - (o.x + o.w / 2.0);
  const double dy = py + 0.5 - (o.y + o.h / 2.0);
  return dx * dx + dy * dy <= 4.0;
}

void draw(std::vector<std::uint8_t>& img, int size, const SceneObject& o, std::uint64_t noise_seed) {
  CounterRng noise(noise_seed);
  for (int y = o.y; y < o.y + o.h; ++y) {
    for (int x = o.x; x < o.x + o.w; ++x) {
      if (!in_footprint(o, x, y)) continue;
      const double n = (noise.uniform_at(static_cast<std::uint64_t>(y) * size + x) - 0.5) * 8.0;
      for (int c = 0; c < 3; ++c) img[(y * size + x) * 3 + c] = clamp_u8(o.color[c] + n);
    }
  }
}

std::string replace_all(std::string s, const std::string& key, const std::string& value) {
  for (std::size_t p = s.find(key); p != std::string::npos; p = s.find(key, p + value.size())) {
    s.replace(p, key.size(), value);
  }
  return s;
}

}  // namespace

const char* class_name(ObjectClass c) { return kSingular[static_cast<int>(c)]; }

ObjectClass parse_class(const std::string& name) {
  for (int i = 0; i < 3; ++i) {
    if (name == kSingular[i] || name == kPlural[i]) return static_cast<ObjectClass>(i);
  }
  throw DataError("unknown object class '" + name + "'");
}

const std::string& location_phrase(int cell) {
  static const std::vector<std::string> phrases = {
      "top left corner",    "top",    "top right corner",    "left side", "center",
      "right side",         "bottom left corner", "bottom",  "bottom right corner",
  };
  if (cell < 0 || cell > 8) throw DataError("location cell " + std::to_string(cell) + " outside 0..8");
  return phrases[cell];
}

const std::vector<std::string>& count_words() {
  static const std::vector<std::string> words = {"one", "two", "three", "four", "five"};
  return words;
}

std::pair<int, int> cell_bounds(int size, int k) {
  const int units = size / kLattice;
  const int b1 = units * 5 / 16, b2 = units * 11 / 16;
  const int lo[3] = {0, b1, b2}, hi[3] = {b1, b2, units};
  return {lo[k] * kLattice, hi[k] * kLattice};
}

std::vector<std::string> caption_from_changes(const std::vector<ChangeGroup>& changes) {
  if (changes.empty()) return kNoChange;
  if (changes.size() > 1) throw DataError("captions describe at most one change group");
  const ChangeGroup& g = changes[0];
  const int ci = static_cast<int>(g.cls);
  if (ci < 0 || ci > 2) throw DataError("unknown object class in change list");
  if (g.count < 1 || g.count > 5) throw DataError("change count must be in 1..5");
  const bool plural = g.count > 1;
  static const std::vector<std::string> add = {
      "{n} new {N} {appear} at the {L}",
      "{n} {N} {have} been added at the {L}",
      "there {be} {n} new {N} at the {L}",
      "{n} {N} {be} {built} at the {L}",
      "the scene changes with {n} new {N} at the {L}",
  };
  static const std::vector<std::string> removal = {
      "{n} {N} {disappear} from the {L}",
      "{n} {N} {have} been removed from the {L}",
      "at the {L} {n} {N} {be} removed",
      "{n} {N} at the {L} {disappear}",
      "the scene changes with {n} {N} removed from the {L}",
  };
  std::vector<std::string> out;
  for (std::string s : g.addition ? add : removal) {
    s = replace_all(s, "{n}", count_words()[g.count - 1]);
    s = replace_all(s, "{N}", plural ? kPlural[ci] : kSingular[ci]);
    s = replace_all(s, "{L}", location_phrase(g.cell));
    s = replace_all(s, "{appear}", plural ? "appear" : "appears");
    s = replace_all(s, "{disappear}", plural ? "disappear" : "disappears");
    s = replace_all(s, "{have}", plural ? "have" : "has");
    s = replace_all(s, "{be}", plural ? "are" : "is");
    s = replace_all(s, "{built}", kBuiltVerb[ci]);
    out.push_back(s);
  }
  return out;
}

std::vector<std::string> caption_lexicon() {
  std::set<std::string> words;
  auto take = [&](const std::vector<std::string>& caps) {
    for (const auto& c : caps) {
      for (const auto& t : tokenize(c)) words.insert(t);
    }
  };
  take(kNoChange);
  for (int add = 0; add < 2; ++add) {
    for (int cls = 0; cls < 3; ++cls) {
      for (int n = 1; n <= 2; ++n) {
        for (int cell = 0; cell < 9; ++cell) {
          take(caption_from_changes({{add == 1, static_cast<ObjectClass>(cls), n, cell}}));
        }
      }
    }
  }
  for (const auto& w : count_words()) words.insert(w);
  return {words.begin(), words.end()};
}

std::optional<ChangeGroup> parse_caption(const std::string& caption) {
  const auto toks = tokenize(caption);
  ChangeGroup g;
  bool have_count = false, have_class = false;
  g.addition = true;
  for (const auto& t : toks) {
    for (int i = 0; i < 5; ++i) {
      if (!have_count && t == count_words()[i]) {
        g.count = i + 1;
        have_count = true;
      }
    }
    for (int i = 0; i < 3; ++i) {
      if (!have_class && (t == kSingular[i] || t == kPlural[i])) {
        g.cls = static_cast<ObjectClass>(i);
        have_class = true;
      }
    }
    if (t == "removed" || t == "disappear" || t == "disappears") g.addition = false;
  }
  if (!have_count || !have_class) return std::nullopt;
  std::string joined;
  for (const auto& t : toks) joined += " " + t;
  joined += " ";
  static const int order[9] = {0, 2, 6, 8, 3, 5, 4, 1, 7};
  g.cell = -1;
  for (int cell : order) {
    if (joined.find(" the " + location_phrase(cell) + " ") != std::string::npos) {
      g.cell = cell;
      break;
    }
  }
  if (g.cell < 0) return std::nullopt;
  return g;
}

SceneSpec make_scene(std::uint64_t seed, int size, std::optional<bool> force_no_change) {
  if (size < 16 || size % 16 != 0) throw ConfigError("image size must be a positive multiple of 16");
  CounterRng rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  spec.size = size;
  const int units = size / kLattice;
  Occupancy occ(units);

  const bool no_change = force_no_change.has_value() ? *force_no_change : rng.uniform() < 0.25;
  if (!no_change) {
    ChangeGroup g;
    g.addition = rng.uniform() < 0.5;
    g.cls = static_cast<ObjectClass>(rng.randint(0, 2));
    g.count = rng.randint(1, kMaxCount[static_cast<int>(g.cls)]);
    g.cell = rng.randint(0, 8);
    auto [cx0, cx1] = cell_bounds(size, g.cell % 3);
    auto [cy0, cy1] = cell_bounds(size, g.cell / 3);
    for (;;) {
      Occupancy trial(units);
      std::vector<SceneObject> objs;
      for (int i = 0; i < g.count; ++i) {
        auto o = place(rng, trial, g.cls, cx0 / kLattice, cy0 / kLattice, cx1 / kLattice, cy1 / kLattice);
        if (!o) break;
        objs.push_back(*o);
      }
      if (static_cast<int>(objs.size()) == g.count) {
        occ = trial;
        spec.changed = objs;
        break;
      }
      --g.count;  // a single object always fits in a cell
    }
    spec.changes.push_back(g);
  }
  const int persistent = rng.randint(1, 4);
  for (int i = 0; i < persistent; ++i) {
    auto cls = static_cast<ObjectClass>(rng.randint(0, 2));
    if (auto o = place(rng, occ, cls, 0, 0, units, units)) spec.persistent.push_back(*o);
  }
  spec.nuisance_phase = rng.randint(0, 1);
  spec.contrast = rng.uniform(0.85, 1.15);
  spec.brightness = rng.uniform(-20.0, 20.0);
  return spec;
}

SampleRecord render_scene(const SceneSpec& spec, const std::string& id) {
  const int S = spec.size;
  CounterRng rng(spec.seed ^ 0x5eedf00dULL);
  int grass[3] = {90, 140, 70};
  for (int& g : grass) g += rng.randint(-10, 10);
  std::vector<std::uint8_t> bg(static_cast<std::size_t>(S) * S * 3);
  CounterRng tex(spec.seed ^ 0x7e7ULL);
  for (int i = 0; i < S * S; ++i) {
    const double n = (tex.uniform_at(i) - 0.5) * 12.0;
    for (int c = 0; c < 3; ++c) bg[i * 3 + c] = clamp_u8(grass[c] + n);
  }
  SampleRecord rec;
  rec.id = id;
  rec.size = S;
  rec.img_a = bg;
  rec.img_b = bg;
  for (std::size_t k = 0; k < spec.persistent.size(); ++k) {
    const std::uint64_t ns = spec.seed * 31 + k;
    draw(rec.img_a, S, spec.persistent[k], ns);
    draw(rec.img_b, S, spec.persistent[k], ns);
  }
  const bool addition = !spec.changes.empty() && spec.changes[0].addition;
  for (std::size_t k = 0; k < spec.changed.size(); ++k) {
    draw(addition ? rec.img_b : rec.img_a, S, spec.changed[k], spec.seed * 37 + k);
  }
  // Global photometric nuisance on one phase only.
  auto& shifted = spec.nuisance_phase == 0 ? rec.img_a : rec.img_b;
  for (auto& v : shifted) v = clamp_u8((v - 128.0) * spec.contrast + 128.0 + spec.brightness);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(S) * S, 0);
  for (const auto& o : spec.changed) {
    for (int y = o.y; y < o.y + o.h; ++y) {
      for (int x = o.x; x < o.x + o.w; ++x) {
        if (in_footprint(o, x, y)) mask[y * S + x] = 1;
      }
    }
  }
  rec.mask = std::move(mask);
  rec.captions = caption_from_changes(spec.changes);
  return rec;
}

std::vector<std::string> SplitManifest::all() const {
  std::vector<std::string> out;
  for (const auto* v : {&cd, &cc, &cd_cc, &val, &test}) out.insert(out.end(), v->begin(), v->end());
  return out;
}

const SampleRecord& Dataset::at(const std::string& id) const {
  auto it = records.find(id);
  if (it == records.end()) throw DataError("unknown sample id '" + id + "'");
  return it->second;
}

Dataset generate_dataset(std::uint64_t seed, const SplitSizes& sizes, int size) {
  if (sizes.cd < 0 || sizes.cc < 0 || sizes.cd_cc < 0 || sizes.val < 0 || sizes.test < 0) {
    throw ConfigError("split sizes must be non-negative");
  }
  if (sizes.cd + sizes.cc + sizes.cd_cc + sizes.val + sizes.test < 1) throw ConfigError("dataset needs >= 1 sample");
  Dataset ds;
  ds.size = size;
  ds.seed = seed;
  const std::uint64_t base = mix64(seed);
  int next = 0;
  auto fill = [&](std::vector<std::string>& split, int n, bool keep_mask, bool keep_captions) {
    for (int i = 0; i < n; ++i, ++next) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%06d", next);
      SampleRecord rec = render_scene(make_scene(base + static_cast<std::uint64_t>(next), size), buf);
      if (!keep_mask) rec.mask.reset();
      if (!keep_captions) rec.captions.reset();
      split.push_back(rec.id);
      ds.records.emplace(rec.id, std::move(rec));
    }
  };
  fill(ds.splits.cd, sizes.cd, true, false);
  fill(ds.splits.cc, sizes.cc, false, true);
  fill(ds.splits.cd_cc, sizes.cd_cc, true, true);
  fill(ds.splits.val, sizes.val, true, true);
  fill(ds.splits.test, sizes.test, true, true);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  std::ofstream caps(fs::path(dir) / "captions.jsonl");
  if (!caps) throw DataError("cannot write captions.jsonl in " + dir);
  for (const auto& id : ds.splits.all()) {
    const SampleRecord& r = ds.at(id);
    Image8 img{r.size, r.size, 3, r.img_a};
    write_png((fs::path(dir) / "images" / (id + "_a.png")).string(), img);
    img.pixels = r.img_b;
    write_png((fs::path(dir) / "images" / (id + "_b.png")).string(), img);
    if (r.mask) {
      Image8 m{r.size, r.size, 1, *r.mask};
      for (auto& v : m.pixels) v = v ? 255 : 0;
      write_png((fs::path(dir) / "masks" / (id + ".png")).string(), m);
    }
    if (r.captions) caps << nlohmann::json{{"id", id}, {"captions", *r.captions}}.dump() << "\n";
  }
  nlohmann::json man;
  man["format"] = "semcc-dataset-1";
  man["size"] = ds.size;
  man["seed"] = ds.seed;
  man["splits"] = {{"cd", ds.splits.cd},   {"cc", ds.splits.cc},     {"cd_cc", ds.splits.cd_cc},
                   {"val", ds.splits.val}, {"test", ds.splits.test}};
  std::ofstream os(fs::path(dir) / "manifest.json");
  os << man.dump(2) << "\n";
  if (!os) throw DataError("cannot write manifest.json in " + dir);
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream is(root / "manifest.json");
  if (!is) throw DataError("no manifest.json in " + dir);
  Dataset ds;
  std::set<std::string> need_mask, need_caps;
  try {
    nlohmann::json man = nlohmann::json::parse(is);
    ds.size = man.at("size").get<int>();
    ds.seed = man.value("seed", std::uint64_t{0});
    const auto& sp = man.at("splits");
    ds.splits.cd = sp.at("cd").get<std::vector<std::string>>();
    ds.splits.cc = sp.at("cc").get<std::vector<std::string>>();
    ds.splits.cd_cc = sp.at("cd_cc").get<std::vector<std::string>>();
    ds.splits.val = sp.at("val").get<std::vector<std::string>>();
    ds.splits.test = sp.at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest in " + dir + ": " + e.what());
  }
  for (const auto* v : {&ds.splits.cd, &ds.splits.cd_cc, &ds.splits.val, &ds.splits.test}) {
    need_mask.insert(v->begin(), v->end());
  }
  for (const auto* v : {&ds.splits.cc, &ds.splits.cd_cc, &ds.splits.val, &ds.splits.test}) {
    need_caps.insert(v->begin(), v->end());
  }
  std::map<std::string, std::vector<std::string>> captions;
  {
    std::ifstream cs(root / "captions.jsonl");
    std::string line;
    int lineno = 0;
    while (std::getline(cs, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        captions[j.at("id").get<std::string>()] = j.at("captions").get<std::vector<std::string>>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError("captions.jsonl line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  for (const auto& id : ds.splits.all()) {
    if (ds.records.count(id)) throw DataError("sample id '" + id + "' listed twice in manifest");
    SampleRecord r;
    r.id = id;
    r.size = ds.size;
    auto load_rgb = [&](const std::string& suffix) {
      const fs::path p = root / "images" / (id + suffix);
      if (!fs::exists(p)) throw DataError("sample '" + id + "': missing " + p.string());
      Image8 img = read_png(p.string(), 3);
      if (img.width != ds.size || img.height != ds.size) {
        throw DataError("sample '" + id + "': image is " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + ", expected " + std::to_string(ds.size));
      }
      return img.pixels;
    };
    r.img_a = load_rgb("_a.png");
    r.img_b = load_rgb("_b.png");
    if (need_mask.count(id)) {
      const fs::path p = root / "masks" / (id + ".png");
      if (!fs::exists(p)) throw DataError("sample '" + id + "': missing mask " + p.string());
      Image8 m = read_png(p.string(), 1);
      if (m.width != ds.size || m.height != ds.size) throw DataError("sample '" + id + "': mask extent mismatch");
      for (auto& v : m.pixels) {
        if (v != 0 && v != 255) throw DataError("sample '" + id + "': mask value " + std::to_string(v) + " not 0/255");
        v = v ? 1 : 0;
      }
      r.mask = std::move(m.pixels);
    }
    if (need_caps.count(id)) {
      auto it = captions.find(id);
      if (it == captions.end() || it->second.empty()) throw DataError("sample '" + id + "': no captions");
      r.captions = it->second;
    }
    ds.records.emplace(id, std::move(r));
  }
  return ds;
}

std::string dataset_digest(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).generic_string());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a("");
  for (const auto& f : files) {
    h = fnv1a(f, h);
    std::ifstream is(fs::path(dir) / f, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    h = fnv1a(bytes, h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace semcc
