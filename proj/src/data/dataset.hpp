// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace semcc {

enum class ObjectClass { kBuilding = 0, kRoad = 1, kTree = 2 };

const char* class_name(ObjectClass c);
/// Parses "building" / "road" / "tree"; throws DataError otherwise.
ObjectClass parse_class(const std::string& name);

/// Axis-aligned object on the 4-pixel lattice, in pixels.
struct SceneObject {
  ObjectClass cls = ObjectClass::kBuilding;
  int x = 0, y = 0, w = 0, h = 0;
  std::uint8_t color[3] = {0, 0, 0};
};

/// One group of same-class objects added or removed inside one of the nine
/// location cells (0 = top left ... 8 = bottom right, row-major).
struct ChangeGroup {
  bool addition = true;
  ObjectClass cls = ObjectClass::kBuilding;
  int count = 1;
  int cell = 4;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int size = 64;
  std::vector<SceneObject> persistent;     // present in both phases
  std::vector<ChangeGroup> changes;        // empty or one group
  std::vector<SceneObject> changed;        // footprints of the change group
  int nuisance_phase = 1;                  // 0 or 1
  double contrast = 1.0, brightness = 0.0;
};

struct SampleRecord {
  std::string id;
  int size = 64;
  std::vector<std::uint8_t> img_a, img_b;  // [size, size, 3] interleaved RGB
  std::optional<std::vector<std::uint8_t>> mask;  // [size, size] in {0, 1}
  std::optional<std::vector<std::string>> captions;
  bool operator==(const SampleRecord&) const = default;
};

/// Location phrase of a nine-cell index, e.g. "top left corner".
const std::string& location_phrase(int cell);
const std::vector<std::string>& count_words();
/// Pixel bounds [lo, hi) of cell row/column `k` (0..2) for an image of `size`.
std::pair<int, int> cell_bounds(int size, int k);

/// Five paraphrases from distinct template families. Empty list -> no-change family.
std::vector<std::string> caption_from_changes(const std::vector<ChangeGroup>& changes);
/// Every word any generated caption can contain.
std::vector<std::string> caption_lexicon();

/// Parses (addition, class, count, cell) back out of one generated caption;
/// nullopt for a no-change sentence.
std::optional<ChangeGroup> parse_caption(const std::string& caption);

/// Deterministic scene description for `seed`; `force_no_change` suppresses the change group.
SceneSpec make_scene(std::uint64_t seed, int size, std::optional<bool> force_no_change = std::nullopt);
/// Renders both phases and the change mask.
SampleRecord render_scene(const SceneSpec& spec, const std::string& id);

struct SplitManifest {
  std::vector<std::string> cd, cc, cd_cc, val, test;
  std::vector<std::string> all() const;
};

struct Dataset {
  int size = 64;
  std::uint64_t seed = 0;
  SplitManifest splits;
  std::map<std::string, SampleRecord> records;

  const SampleRecord& at(const std::string& id) const;
};

struct SplitSizes {
  int cd = 1500, cc = 1500, cd_cc = 500, val = 200, test = 200;
};

/// cd samples keep only masks, cc samples only captions; the rest keep both.
Dataset generate_dataset(std::uint64_t seed, const SplitSizes& sizes, int size);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);
/// FNV-1a digest over every file of a dataset directory (sorted relative paths + bytes).
std::string dataset_digest(const std::string& dir);

}  // namespace semcc
