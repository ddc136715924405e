// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "data/dataset.hpp"
#include "data/png_io.hpp"
#include "model/model.hpp"
#include "tensor/errors.hpp"

using namespace semcc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("semcc_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Independent footprint oracle: rasterize each object from its class geometry.
int footprint_pixels(const SceneSpec& s) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(s.size) * s.size, 0);
  for (const auto& o : s.changed) {
    for (int y = o.y; y < o.y + o.h; ++y) {
      for (int x = o.x; x < o.x + o.w; ++x) {
        bool in = true;
        if (o.cls == ObjectClass::kTree) {
          const double cx = o.x + o.w / 2.0, cy = o.y + o.h / 2.0, r = o.w / 2.0;
          in = (x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy) <= r * r;
        }
        if (in) m[y * s.size + x] = 1;
      }
    }
  }
  return static_cast<int>(std::count(m.begin(), m.end(), 1));
}

}  // namespace

TEST(Scene, DeterministicPerSeed) {
  for (std::uint64_t seed : {0ull, 1ull, 12345ull}) {
    const SampleRecord a = render_scene(make_scene(seed, 64), "x");
    const SampleRecord b = render_scene(make_scene(seed, 64), "x");
    EXPECT_EQ(a, b);
  }
}

TEST(Scene, NoChangeHasEmptyMaskAndNoChangeCaptions) {
  const SampleRecord r = render_scene(make_scene(3, 64, true), "x");
  EXPECT_TRUE(std::all_of(r.mask->begin(), r.mask->end(), [](std::uint8_t v) { return v == 0; }));
  ASSERT_EQ(r.captions->size(), 5u);
  EXPECT_EQ((*r.captions)[0], "the scene is the same as before");
  for (const auto& c : *r.captions) EXPECT_FALSE(parse_caption(c).has_value()) << c;
}

TEST(Scene, MaskIsUnionOfChangedFootprints) {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const SceneSpec s = make_scene(seed, 64);
    if (s.changes.empty()) continue;
    const SampleRecord r = render_scene(s, "x");
    EXPECT_EQ(std::count(r.mask->begin(), r.mask->end(), 1), footprint_pixels(s)) << "seed " << seed;
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(Scene, CaptionRoundTripMatchesChangeList) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const SceneSpec s = make_scene(seed, 64);
    const auto caps = caption_from_changes(s.changes);
    ASSERT_EQ(caps.size(), 5u);
    for (const auto& c : caps) {
      const auto parsed = parse_caption(c);
      if (s.changes.empty()) {
        EXPECT_FALSE(parsed.has_value()) << c;
        continue;
      }
      ASSERT_TRUE(parsed.has_value()) << c;
      const ChangeGroup& g = s.changes[0];
      EXPECT_EQ(parsed->count, g.count) << c;
      EXPECT_EQ(parsed->cls, g.cls) << c;
      EXPECT_EQ(parsed->cell, g.cell) << c;
      EXPECT_EQ(parsed->addition, g.addition) << c;
      EXPECT_EQ(static_cast<int>(s.changed.size()), g.count);
    }
  }
}

TEST(Scene, AddTwoBuildingsTopLeft) {
  ChangeGroup g;
  g.addition = true;
  g.cls = ObjectClass::kBuilding;
  g.count = 2;
  g.cell = 0;
  for (const auto& c : caption_from_changes({g})) {
    EXPECT_NE(c.find("two"), std::string::npos) << c;
    EXPECT_NE(c.find("top left"), std::string::npos) << c;
  }
}

TEST(Scene, ParaphrasesDistinctAndInVocabulary) {
  const auto lex = caption_lexicon();
  const std::set<std::string> vocab(lex.begin(), lex.end());
  for (int cls = 0; cls < 3; ++cls) {
    for (int cell = 0; cell < 9; ++cell) {
      for (int count = 1; count <= 5; ++count) {
        for (bool add : {true, false}) {
          ChangeGroup g{add, static_cast<ObjectClass>(cls), count, cell};
          const auto caps = caption_from_changes({g});
          EXPECT_EQ(std::set<std::string>(caps.begin(), caps.end()).size(), 5u);
          for (const auto& c : caps) {
            for (const auto& t : tokenize(c)) EXPECT_TRUE(vocab.count(t)) << t;
          }
          if (!add) {
            bool removal_verb = false;
            for (const auto& c : caps) {
              removal_verb |= c.find("removed") != std::string::npos || c.find("disappear") != std::string::npos;
            }
            EXPECT_TRUE(removal_verb);
          }
        }
      }
    }
  }
}

TEST(Scene, UnknownClassIsRejected) { EXPECT_THROW(parse_class("lake"), DataError); }

TEST(Scene, NuisanceAloneNeverProducesMask) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SceneSpec s = make_scene(seed, 64, true);
    s.contrast = 1.15;
    s.brightness = 20.0;
    const SampleRecord r = render_scene(s, "x");
    EXPECT_TRUE(std::all_of(r.mask->begin(), r.mask->end(), [](std::uint8_t v) { return v == 0; }));
    EXPECT_FALSE(parse_caption((*r.captions)[0]).has_value());
  }
}

TEST(Scene, NoChangeFractionNearQuarter) {
  int none = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) none += make_scene(1000 + i, 64).changes.empty();
  EXPECT_NEAR(static_cast<double>(none) / n, 0.25, 0.03);
}

TEST(Dataset, SplitsDisjointAndLabelled) {
  const Dataset ds = generate_dataset(4, SplitSizes{20, 20, 10, 8, 8}, 64);
  std::set<std::string> seen;
  for (const auto& id : ds.splits.all()) EXPECT_TRUE(seen.insert(id).second) << id;
  for (const auto& id : ds.splits.cd) {
    EXPECT_TRUE(ds.at(id).mask.has_value());
    EXPECT_FALSE(ds.at(id).captions.has_value());
  }
  for (const auto& id : ds.splits.cc) {
    EXPECT_FALSE(ds.at(id).mask.has_value());
    EXPECT_TRUE(ds.at(id).captions.has_value());
  }
  for (const auto* split : {&ds.splits.cd_cc, &ds.splits.val, &ds.splits.test}) {
    for (const auto& id : *split) {
      EXPECT_TRUE(ds.at(id).mask.has_value());
      EXPECT_TRUE(ds.at(id).captions.has_value());
    }
  }
}

TEST(Dataset, BothLabelsDescribeSameChange) {
  const Dataset ds = generate_dataset(5, SplitSizes{1, 1, 40, 1, 1}, 64);
  for (const auto& id : ds.splits.cd_cc) {
    const SampleRecord& r = ds.at(id);
    const bool changed = std::any_of(r.mask->begin(), r.mask->end(), [](std::uint8_t v) { return v != 0; });
    EXPECT_EQ(changed, parse_caption((*r.captions)[0]).has_value()) << id;
  }
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir("roundtrip");
  const Dataset ds = generate_dataset(6, SplitSizes{3, 3, 2, 2, 2}, 64);
  save_dataset(ds, dir.path.string());
  const Dataset back = load_dataset(dir.path.string());
  EXPECT_EQ(back.size, ds.size);
  EXPECT_EQ(back.splits.all(), ds.splits.all());
  for (const auto& id : ds.splits.all()) EXPECT_EQ(back.at(id), ds.at(id)) << id;
  const Image8 img = read_png((dir.path / "images" / (ds.splits.cd[0] + "_a.png")).string(), 3);
  EXPECT_EQ(img.width, 64);
  EXPECT_EQ(img.height, 64);
  // Masks on disk are 0/255 and load back to {0, 1}.
  const Image8 m = read_png((dir.path / "masks" / (ds.splits.cd[0] + ".png")).string(), 1);
  for (auto v : m.pixels) EXPECT_TRUE(v == 0 || v == 255);
  for (auto v : *back.at(ds.splits.cd[0]).mask) EXPECT_LE(v, 1);
}

TEST(Dataset, DigestIsStableAndContentSensitive) {
  TempDir a("digest_a"), b("digest_b");
  save_dataset(generate_dataset(7, SplitSizes{2, 2, 1, 1, 1}, 64), a.path.string());
  save_dataset(generate_dataset(7, SplitSizes{2, 2, 1, 1, 1}, 64), b.path.string());
  EXPECT_EQ(dataset_digest(a.path.string()), dataset_digest(b.path.string()));
  std::ofstream(b.path / "captions.jsonl", std::ios::app) << "\n";
  EXPECT_NE(dataset_digest(a.path.string()), dataset_digest(b.path.string()));
}

TEST(Dataset, UnknownIdInManifestIsNamed) {
  TempDir dir("badid");
  save_dataset(generate_dataset(8, SplitSizes{1, 1, 1, 1, 1}, 64), dir.path.string());
  nlohmann::json man;
  std::ifstream(dir.path / "manifest.json") >> man;
  man["splits"]["test"].push_back("999999");
  std::ofstream(dir.path / "manifest.json") << man.dump();
  try {
    load_dataset(dir.path.string());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("999999"), std::string::npos) << e.what();
  }
}
