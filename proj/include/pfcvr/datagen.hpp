#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfcvr/featurespace.hpp"
#include "pfcvr/image_io.hpp"
#include "pfcvr/lexicon.hpp"
#include "pfcvr/rng.hpp"
#include "pfcvr/tokenizer.hpp"

namespace pfcvr {

constexpr int kNumParts = 6;
constexpr int kGridSide = 24;
constexpr int kGridBits = kGridSide * kGridSide;

// 24x24 binary occupancy grid for one part, row-major.
struct GridMask {
    std::array<uint8_t, kGridBits> bits{};

    uint8_t get(int r, int c) const { return bits[static_cast<size_t>(r) * kGridSide + c]; }
    void set(int r, int c, uint8_t v) { bits[static_cast<size_t>(r) * kGridSide + c] = v; }

    bool any() const {
        for (uint8_t b : bits)
            if (b) return true;
        return false;
    }

    bool operator==(const GridMask& o) const { return bits == o.bits; }

    // 144 hex chars; nibble j packs bits 4j..4j+3 with bit 4j most significant.
    std::string to_hex() const {
        static const char* digits = "0123456789abcdef";
        std::string out(kGridBits / 4, '0');
        for (int j = 0; j < kGridBits / 4; ++j) {
            int v = (bits[4 * j] << 3) | (bits[4 * j + 1] << 2) | (bits[4 * j + 2] << 1) |
                    bits[4 * j + 3];
            out[static_cast<size_t>(j)] = digits[v];
        }
        return out;
    }

    static GridMask from_hex(const std::string& hex) {
        check(hex.size() == kGridBits / 4, "GridMask: hex string must be 144 chars");
        GridMask g;
        for (int j = 0; j < kGridBits / 4; ++j) {
            char c = hex[static_cast<size_t>(j)];
            int v;
            if (c >= '0' && c <= '9') v = c - '0';
            else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
            else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
            else throw std::invalid_argument("GridMask: invalid hex character");
            g.bits[4 * j] = (v >> 3) & 1;
            g.bits[4 * j + 1] = (v >> 2) & 1;
            g.bits[4 * j + 2] = (v >> 1) & 1;
            g.bits[4 * j + 3] = v & 1;
        }
        return g;
    }
};

// A part annotation is either a grid (segmentation-style source data) or an
// axis-aligned pixel box [x0,x1) x [y0,y1) (detector-style source data).
struct PartAnnotation {
    bool is_box = false;
    GridMask grid;
    std::array<int, 4> box{};  // x0, y0, x1, y1

    bool empty() const { return is_box ? (box[0] >= box[2] || box[1] >= box[3]) : !grid.any(); }
};

struct SampleRecord {
    std::string image_path;
    std::string caption;
    int identity = 0;
    std::string split;  // "train" | "test"
    std::vector<PartAnnotation> part_masks;  // kNumParts entries, fixed part order
};

// ---- vehicle identity ----

struct SyntheticVehicleSpec {
    int body_color = 0;
    int body_shape = 0;
    std::array<int, kNumParts> part_values{};

    uint64_t tuple_key() const {
        uint64_t k = static_cast<uint64_t>(body_color);
        k = k * 64 + static_cast<uint64_t>(body_shape);
        for (int v : part_values) k = k * 64 + static_cast<uint64_t>(v);
        return k;
    }
};

inline SyntheticVehicleSpec random_vehicle_spec(Rng& rng) {
    SyntheticVehicleSpec s;
    s.body_color = rng.uniform_int(static_cast<int>(kBodyColors.size()));
    s.body_shape = rng.uniform_int(static_cast<int>(kBodyShapes.size()));
    for (int k = 0; k < kNumParts; ++k)
        s.part_values[static_cast<size_t>(k)] =
            rng.uniform_int(static_cast<int>(kPartValues[static_cast<size_t>(k)].size()));
    return s;
}

// ---- captions ----

inline std::string part_text(const SyntheticVehicleSpec& s, int k) {
    return kPartValues[static_cast<size_t>(k)][static_cast<size_t>(
               s.part_values[static_cast<size_t>(k)])] +
           " " + kPartNames[static_cast<size_t>(k)];
}

namespace detail {

inline std::string replace_slot(std::string tpl, const std::string& slot,
                                const std::string& value) {
    auto at = tpl.find(slot);
    check(at != std::string::npos, "caption template missing slot " + slot);
    return tpl.replace(at, slot.size(), value);
}

}  // namespace detail

// One caption mentioning every attribute exactly once: an opener naming body
// color and shape, one sentence per part in shuffled order, and a closer.
inline std::string make_caption(const SyntheticVehicleSpec& s, Rng& rng) {
    static const std::vector<std::string> openers = {
        "this image shows a {C} {S} from a three quarter view",
        "the photo presents a {C} {S} seen at street level",
        "pictured here is a {C} {S} in an open lot",
        "a {C} {S} occupies the center of this daytime photo"};
    static const std::array<std::array<std::string, 2>, kNumParts> part_sentences = {{
        {"the cabin is fitted with {V} windows", "around the cabin sit {V} windows"},
        {"it rides on {V} wheels", "the car rolls on {V} wheels"},
        {"there are {V} doors along its body", "the body carries {V} doors in total"},
        {"{V} mirrors extend from either side", "the sides hold small {V} mirrors"},
        {"up front it carries {V} lights", "the nose is marked by {V} lights"},
        {"the top is finished with a {V} roof", "above everything rests a {V} roof"},
    }};
    static const std::vector<std::string> closers = {
        "the overall condition appears clean", "nothing else crowds the frame",
        "the scene is plain with even light", "dust and minor wear mark the machine"};

    std::string opener = openers[static_cast<size_t>(rng.uniform_int(4))];
    opener = detail::replace_slot(opener, "{C}", kBodyColors[static_cast<size_t>(s.body_color)]);
    opener = detail::replace_slot(opener, "{S}", kBodyShapes[static_cast<size_t>(s.body_shape)]);

    std::vector<int> order(kNumParts);
    for (int k = 0; k < kNumParts; ++k) order[static_cast<size_t>(k)] = k;
    rng.shuffle(order);

    std::string caption = opener + ".";
    for (int k : order) {
        const auto& variants = part_sentences[static_cast<size_t>(k)];
        std::string sent = variants[static_cast<size_t>(rng.uniform_int(2))];
        sent = detail::replace_slot(
            sent, "{V}",
            kPartValues[static_cast<size_t>(k)][static_cast<size_t>(
                s.part_values[static_cast<size_t>(k)])]);
        caption += " " + sent + ".";
    }
    caption += " " + closers[static_cast<size_t>(rng.uniform_int(4))] + ".";
    return caption;
}

// Recovers the full attribute tuple from a generated caption. Each part noun
// must appear exactly once, preceded by one of its legal values.
inline SyntheticVehicleSpec parse_caption(const std::string& caption) {
    auto words = Tokenizer::split_words(caption);
    SyntheticVehicleSpec s;
    auto find_value = [&words](const std::string& noun, const std::vector<std::string>& legal,
                               const char* what) {
        int found_at = -1;
        for (size_t i = 0; i < words.size(); ++i) {
            if (words[i] != noun) continue;
            check(found_at < 0, std::string("parse_caption: duplicate mention of ") + what);
            found_at = static_cast<int>(i);
        }
        check(found_at > 0, std::string("parse_caption: missing ") + what);
        const std::string& value = words[static_cast<size_t>(found_at - 1)];
        for (size_t v = 0; v < legal.size(); ++v)
            if (legal[v] == value) return static_cast<int>(v);
        throw std::invalid_argument(std::string("parse_caption: unknown value '") + value +
                                    "' for " + what);
    };

    int shape = -1, shape_at = -1;
    for (size_t i = 0; i < words.size(); ++i)
        for (size_t sh = 0; sh < kBodyShapes.size(); ++sh)
            if (words[i] == kBodyShapes[sh]) {
                check(shape < 0, "parse_caption: duplicate body shape mention");
                shape = static_cast<int>(sh);
                shape_at = static_cast<int>(i);
            }
    check(shape >= 0 && shape_at > 0, "parse_caption: missing body shape");
    s.body_shape = shape;
    const std::string& color = words[static_cast<size_t>(shape_at - 1)];
    s.body_color = -1;
    for (size_t c = 0; c < kBodyColors.size(); ++c)
        if (kBodyColors[c] == color) s.body_color = static_cast<int>(c);
    check(s.body_color >= 0, "parse_caption: unknown body color '" + color + "'");

    for (int k = 0; k < kNumParts; ++k)
        s.part_values[static_cast<size_t>(k)] =
            find_value(kPartNames[static_cast<size_t>(k)], kPartValues[static_cast<size_t>(k)],
                       kPartNames[static_cast<size_t>(k)].c_str());
    return s;
}

// ---- renderer ----

namespace detail {

struct CellRect {
    int r0, r1, c0, c1;  // half-open cell ranges
};

struct VehicleLayout {
    std::vector<CellRect> background;                       // body-colored slabs
    std::array<std::vector<CellRect>, kNumParts> parts;     // pairwise disjoint
};

// All layouts live on the 24x24 cell lattice; parts never share a cell.
inline VehicleLayout layout_for(const SyntheticVehicleSpec& s) {
    VehicleLayout L;
    bool four_doors = s.part_values[2] == 1;  // doors: {"two", "four"}
    auto& P = L.parts;
    P[1] = {{17, 20, 4, 8}, {17, 20, 16, 20}};  // wheels, shared by all shapes
    switch (s.body_shape) {
        case 0:  // sedan
            L.background = {{12, 18, 2, 22}, {7, 12, 6, 18}};
            P[5] = {{5, 7, 7, 17}};
            P[0] = {{8, 11, 7, 12}, {8, 11, 13, 17}};
            P[2] = four_doors ? std::vector<CellRect>{{12, 17, 7, 10}, {12, 17, 12, 15}}
                              : std::vector<CellRect>{{12, 17, 10, 14}};
            P[3] = {{9, 11, 5, 6}, {9, 11, 18, 19}};
            P[4] = {{13, 15, 2, 4}, {13, 15, 20, 22}};
            break;
        case 1:  // hatchback
            L.background = {{12, 18, 3, 21}, {7, 12, 6, 20}};
            P[5] = {{5, 7, 7, 19}};
            P[0] = {{8, 11, 7, 12}, {8, 11, 13, 19}};
            P[2] = four_doors ? std::vector<CellRect>{{12, 17, 7, 10}, {12, 17, 12, 15}}
                              : std::vector<CellRect>{{12, 17, 10, 14}};
            P[3] = {{9, 11, 5, 6}, {9, 11, 20, 21}};
            P[4] = {{13, 15, 3, 5}, {13, 15, 19, 21}};
            break;
        case 2:  // pickup
            L.background = {{12, 18, 2, 22}, {6, 12, 3, 12}, {10, 12, 13, 22}};
            P[5] = {{4, 6, 4, 11}};
            P[0] = {{7, 10, 4, 8}, {7, 10, 9, 12}};
            P[2] = four_doors ? std::vector<CellRect>{{12, 17, 4, 7}, {12, 17, 8, 11}}
                              : std::vector<CellRect>{{12, 17, 6, 10}};
            P[3] = {{7, 9, 2, 3}, {7, 9, 12, 13}};
            P[4] = {{13, 15, 2, 4}, {13, 15, 20, 22}};
            break;
        default:  // van
            L.background = {{12, 18, 2, 22}, {4, 12, 4, 20}};
            P[5] = {{2, 4, 5, 19}};
            P[0] = {{6, 10, 5, 9}, {6, 10, 10, 14}, {6, 10, 15, 19}};
            P[2] = four_doors ? std::vector<CellRect>{{12, 17, 6, 9}, {12, 17, 11, 14}}
                              : std::vector<CellRect>{{12, 17, 9, 13}};
            P[3] = {{6, 8, 2, 4}, {6, 8, 20, 22}};
            P[4] = {{13, 15, 2, 4}, {13, 15, 20, 22}};
            break;
    }
    return L;
}

struct Rgb {
    double r, g, b;
};

inline Rgb body_rgb(int idx) {
    static const Rgb table[] = {{0.80, 0.10, 0.10}, {0.10, 0.20, 0.80}, {0.10, 0.60, 0.20},
                                {0.90, 0.80, 0.10}, {0.90, 0.50, 0.10}, {0.50, 0.10, 0.60},
                                {0.50, 0.50, 0.50}, {0.45, 0.30, 0.15}};
    return table[idx];
}

inline Rgb part_rgb(int part, int value, const Rgb& body, bool stripe_cell) {
    switch (part) {
        case 0: {  // windows
            static const Rgb t[] = {{0.15, 0.15, 0.22}, {0.62, 0.82, 0.95}, {0.86, 0.88, 0.90}};
            return t[value];
        }
        case 1: {  // wheels
            static const Rgb t[] = {{0.74, 0.74, 0.78}, {0.06, 0.06, 0.06}, {0.60, 0.42, 0.20}};
            return t[value];
        }
        case 2:  // doors: body tone darkened; the value changes geometry instead
            return {body.r * 0.72, body.g * 0.72, body.b * 0.72};
        case 3: {  // mirrors
            static const Rgb t[] = {{0.06, 0.06, 0.06}, {0.95, 0.95, 0.95}, {0.70, 0.76, 0.82}};
            return t[value];
        }
        case 4: {  // lights
            static const Rgb t[] = {{1.00, 0.95, 0.65}, {0.95, 0.62, 0.20}, {0.85, 0.25, 0.20}};
            return t[value];
        }
        default:  // roof
            if (value == 0) return {0.24, 0.24, 0.28};
            if (value == 1) return {0.55, 0.78, 0.92};
            return stripe_cell ? Rgb{0.12, 0.12, 0.12} : Rgb{0.88, 0.88, 0.88};
    }
}

}  // namespace detail

struct RenderResult {
    Image image;
    std::array<GridMask, kNumParts> grids;
    std::array<int8_t, kGridBits> owner{};  // -1 background, else owning part
};

// Cell-lattice renderer. Every painted region is a union of whole cells, so
// the emitted grids cover exactly the painted part pixels at any resolution.
// Instance variation: whole-lattice shift plus small color jitter.
inline RenderResult render_vehicle(const SyntheticVehicleSpec& spec, int image_size,
                                   uint64_t instance_seed) {
    check(image_size >= kGridSide, "render_vehicle: image smaller than the cell lattice");
    Rng rng(instance_seed);
    int dy = rng.uniform_int(4) - 2;  // [-2, 1]
    int dx = rng.uniform_int(3) - 1;  // [-1, 1]

    detail::Rgb body = detail::body_rgb(spec.body_color);
    double jr = rng.uniform(-0.04, 0.04), jg = rng.uniform(-0.04, 0.04),
           jb = rng.uniform(-0.04, 0.04);
    body = {body.r + jr, body.g + jg, body.b + jb};
    double bg_j = rng.uniform(-0.02, 0.02);
    detail::Rgb sky = {0.92 + bg_j, 0.93 + bg_j, 0.95 + bg_j};
    detail::Rgb ground = {0.58 + bg_j, 0.56 + bg_j, 0.50 + bg_j};

    std::array<detail::Rgb, kGridBits> cell_color;
    RenderResult res;
    res.owner.fill(-1);
    for (int r = 0; r < kGridSide; ++r)
        for (int c = 0; c < kGridSide; ++c)
            cell_color[static_cast<size_t>(r) * kGridSide + c] = r >= 21 ? ground : sky;

    detail::VehicleLayout layout = detail::layout_for(spec);
    auto paint = [&](const detail::CellRect& rect, int part) {
        for (int r = rect.r0 + dy; r < rect.r1 + dy; ++r)
            for (int c = rect.c0 + dx; c < rect.c1 + dx; ++c) {
                check(r >= 0 && r < kGridSide && c >= 0 && c < kGridSide,
                      "render_vehicle: layout cell out of lattice");
                size_t i = static_cast<size_t>(r) * kGridSide + c;
                if (part < 0) {
                    cell_color[i] = body;
                } else {
                    check(res.owner[i] < 0, "render_vehicle: overlapping part cells");
                    res.owner[i] = static_cast<int8_t>(part);
                    res.grids[static_cast<size_t>(part)].set(r, c, 1);
                    cell_color[i] = detail::part_rgb(
                        part, spec.part_values[static_cast<size_t>(part)], body, c % 2 == 0);
                }
            }
    };
    for (const auto& rect : layout.background) paint(rect, -1);
    for (int k = 0; k < kNumParts; ++k)
        for (const auto& rect : layout.parts[static_cast<size_t>(k)]) paint(rect, k);

    res.image = Image(image_size, image_size);
    auto lo = [image_size](int cell) { return cell * image_size / kGridSide; };
    for (int r = 0; r < kGridSide; ++r)
        for (int c = 0; c < kGridSide; ++c) {
            const detail::Rgb& col = cell_color[static_cast<size_t>(r) * kGridSide + c];
            for (int y = lo(r); y < lo(r + 1); ++y)
                for (int x = lo(c); x < lo(c + 1); ++x) {
                    auto clamp01 = [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); };
                    res.image.at(y, x, 0) = clamp01(col.r);
                    res.image.at(y, x, 1) = clamp01(col.g);
                    res.image.at(y, x, 2) = clamp01(col.b);
                }
        }
    return res;
}

// ---- mask plumbing ----

// Any-coverage resampling of a 24x24 grid onto the sqrt(L_v) x sqrt(L_v)
// patch lattice: a patch is set iff it overlaps at least one set cell. Both
// lattices span the same square, so overlap reduces to the integer test
// cell*P < (patch+1)*24 and (cell+1)*P > patch*24.
inline std::vector<uint8_t> grid_to_patch_mask(const GridMask& grid, int num_patches) {
    int side = static_cast<int>(std::llround(std::sqrt(static_cast<double>(num_patches))));
    check(side * side == num_patches, "grid_to_patch_mask: L_v must be a perfect square");
    std::vector<uint8_t> out(static_cast<size_t>(num_patches), 0);
    auto overlap = [side](int cell, int patch) {
        return cell * side < (patch + 1) * kGridSide && (cell + 1) * side > patch * kGridSide;
    };
    for (int gr = 0; gr < kGridSide; ++gr)
        for (int gc = 0; gc < kGridSide; ++gc) {
            if (!grid.get(gr, gc)) continue;
            for (int pr = 0; pr < side; ++pr) {
                if (!overlap(gr, pr)) continue;
                for (int pc = 0; pc < side; ++pc)
                    if (overlap(gc, pc)) out[static_cast<size_t>(pr) * side + pc] = 1;
            }
        }
    return out;
}

// Box variant: a patch is set iff the pixel box [x0,x1) x [y0,y1) overlaps it.
inline std::vector<uint8_t> box_to_patch_mask(const std::array<int, 4>& box, int image_size,
                                              int patch_size) {
    check(image_size % patch_size == 0, "box_to_patch_mask: image not divisible into patches");
    int side = image_size / patch_size;
    std::vector<uint8_t> out(static_cast<size_t>(side) * side, 0);
    int x0 = box[0], y0 = box[1], x1 = box[2], y1 = box[3];
    check(x0 >= 0 && y0 >= 0 && x1 <= image_size && y1 <= image_size,
          "box_to_patch_mask: box out of bounds");
    if (x0 >= x1 || y0 >= y1) return out;
    for (int pr = y0 / patch_size; pr <= (y1 - 1) / patch_size; ++pr)
        for (int pc = x0 / patch_size; pc <= (x1 - 1) / patch_size; ++pc)
            out[static_cast<size_t>(pr) * side + pc] = 1;
    return out;
}

// Patch-level part mask for one record under the given geometry.
inline PartMask record_part_mask(const SampleRecord& rec, int image_size, int patch_size) {
    check(static_cast<int>(rec.part_masks.size()) == kNumParts,
          "record_part_mask: wrong part count");
    int side = image_size / patch_size;
    PartMask pm(kNumParts, side * side);
    for (int k = 0; k < kNumParts; ++k) {
        const PartAnnotation& ann = rec.part_masks[static_cast<size_t>(k)];
        std::vector<uint8_t> row = ann.is_box
                                       ? box_to_patch_mask(ann.box, image_size, patch_size)
                                       : grid_to_patch_mask(ann.grid, side * side);
        for (int p = 0; p < pm.patches; ++p) pm.at(k, p) = row[static_cast<size_t>(p)];
    }
    return pm;
}

// Zeroes every pixel inside the union of the boxes; idempotent.
inline Image make_part_masked_image(const Image& img, const std::vector<std::array<int, 4>>& boxes) {
    Image out = img;
    for (const auto& b : boxes) {
        check(b[0] >= 0 && b[1] >= 0 && b[2] <= img.w && b[3] <= img.h,
              "make_part_masked_image: box out of bounds");
        for (int y = b[1]; y < b[3]; ++y)
            for (int x = b[0]; x < b[2]; ++x)
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = 0.0;
    }
    return out;
}

// Grid variant: zeroes the pixel rectangles of every set cell.
inline Image make_part_masked_image(const Image& img, const std::vector<GridMask>& grids) {
    check(img.h == img.w, "make_part_masked_image: square images only");
    Image out = img;
    auto lo = [&img](int cell) { return cell * img.h / kGridSide; };
    for (const auto& g : grids)
        for (int r = 0; r < kGridSide; ++r)
            for (int c = 0; c < kGridSide; ++c) {
                if (!g.get(r, c)) continue;
                for (int y = lo(r); y < lo(r + 1); ++y)
                    for (int x = lo(c); x < lo(c + 1); ++x)
                        for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = 0.0;
            }
    return out;
}

// ---- manifest I/O ----

inline nlohmann::ordered_json record_to_json(const SampleRecord& rec) {
    nlohmann::ordered_json j;
    j["image_path"] = rec.image_path;
    j["caption"] = rec.caption;
    j["identity"] = rec.identity;
    j["split"] = rec.split;
    nlohmann::ordered_json masks = nlohmann::ordered_json::array();
    for (const auto& ann : rec.part_masks) {
        if (ann.is_box)
            masks.push_back(nlohmann::ordered_json{{"box", ann.box}});
        else
            masks.push_back(nlohmann::ordered_json{{"grid", ann.grid.to_hex()}});
    }
    j["part_masks"] = masks;
    return j;
}

inline SampleRecord record_from_json(const nlohmann::json& j) {
    check(j.is_object(), "manifest: record is not an object");
    for (const char* field : {"image_path", "caption", "identity", "split", "part_masks"})
        check(j.contains(field), std::string("manifest: missing field ") + field);
    SampleRecord rec;
    check(j["image_path"].is_string() && j["caption"].is_string(),
          "manifest: image_path/caption must be strings");
    rec.image_path = j["image_path"].get<std::string>();
    rec.caption = j["caption"].get<std::string>();
    check(j["identity"].is_number_integer(), "manifest: identity must be an integer");
    rec.identity = j["identity"].get<int>();
    check(rec.identity >= 0, "manifest: identity must be non-negative");
    rec.split = j["split"].get<std::string>();
    check(rec.split == "train" || rec.split == "test", "manifest: split must be train or test");
    check(j["part_masks"].is_array() && j["part_masks"].size() == kNumParts,
          "manifest: part_masks must list exactly " + std::to_string(kNumParts) + " entries");
    for (const auto& m : j["part_masks"]) {
        PartAnnotation ann;
        if (m.contains("grid")) {
            ann.is_box = false;
            ann.grid = GridMask::from_hex(m["grid"].get<std::string>());
        } else if (m.contains("box")) {
            ann.is_box = true;
            auto arr = m["box"];
            check(arr.is_array() && arr.size() == 4, "manifest: box must have 4 entries");
            for (int i = 0; i < 4; ++i) ann.box[static_cast<size_t>(i)] = arr[i].get<int>();
            check(ann.box[0] >= 0 && ann.box[1] >= 0 && ann.box[0] <= ann.box[2] &&
                      ann.box[1] <= ann.box[3],
                  "manifest: malformed box");
        } else {
            throw std::invalid_argument("manifest: part mask needs 'grid' or 'box'");
        }
        rec.part_masks.push_back(ann);
    }
    return rec;
}

inline void write_manifest(const std::vector<SampleRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "write_manifest: cannot open " + path);
    for (const auto& rec : records) out << record_to_json(rec).dump() << "\n";
    check(out.good(), "write_manifest: write failed");
}

inline std::vector<SampleRecord> load_manifest(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "load_manifest: cannot open " + path);
    std::vector<SampleRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::invalid_argument("load_manifest: line " + std::to_string(lineno) + ": " +
                                        e.what());
        }
        records.push_back(record_from_json(j));
    }
    check(!records.empty(), "load_manifest: empty manifest " + path);
    return records;
}

inline std::string resolve_image_path(const std::string& manifest_path,
                                      const SampleRecord& rec) {
    std::filesystem::path p(rec.image_path);
    if (p.is_absolute()) return p.string();
    return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

// ---- generation ----

struct DatasetOptions {
    int num_ids = 10;
    int images_per_id = 0;  // 0 = sample from the reference per-id distribution
    uint64_t seed = 0;
    int image_size = 64;
    std::string out_dir;
};

// Per-identity image counts follow the reference corpus shape: mostly 3-4
// annotated pairs per identity, tails at 2 and 5.
inline int sample_images_per_id(Rng& rng) {
    static const int counts[] = {2, 3, 4, 5};
    static const int weights[] = {149, 361, 248, 18};
    int total = 149 + 361 + 248 + 18;
    int pick = rng.uniform_int(total);
    for (int i = 0; i < 4; ++i) {
        if (pick < weights[i]) return counts[i];
        pick -= weights[i];
    }
    return 3;
}

struct GeneratedDataset {
    std::vector<SampleRecord> records;
    std::string manifest_path;
};

// Deterministic per seed: identities, splits, captions, renders, and file
// names all derive from `opts.seed`. Identity-disjoint 7:3 split by id.
inline GeneratedDataset generate_dataset(const DatasetOptions& opts) {
    check(opts.num_ids >= 2, "generate_dataset: need at least 2 identities");
    check(opts.images_per_id >= 0, "generate_dataset: negative images_per_id");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(opts.out_dir) / "images");

    Rng rng(opts.seed);
    std::vector<SyntheticVehicleSpec> specs;
    std::set<uint64_t> seen;
    while (static_cast<int>(specs.size()) < opts.num_ids) {
        SyntheticVehicleSpec s = random_vehicle_spec(rng);
        if (seen.insert(s.tuple_key()).second) specs.push_back(s);
    }

    std::vector<int> id_order(static_cast<size_t>(opts.num_ids));
    for (int i = 0; i < opts.num_ids; ++i) id_order[static_cast<size_t>(i)] = i;
    rng.shuffle(id_order);
    int train_ids = static_cast<int>(std::llround(0.7 * opts.num_ids));
    std::vector<bool> is_train(static_cast<size_t>(opts.num_ids), false);
    for (int i = 0; i < train_ids; ++i) is_train[static_cast<size_t>(id_order[static_cast<size_t>(i)])] = true;

    GeneratedDataset out;
    int record_index = 0;
    for (int id = 0; id < opts.num_ids; ++id) {
        int n_images = opts.images_per_id > 0 ? opts.images_per_id : sample_images_per_id(rng);
        for (int j = 0; j < n_images; ++j) {
            uint64_t rec_seed = mix_seed(opts.seed, static_cast<uint64_t>(record_index));
            Rng rec_rng(rec_seed);
            RenderResult rr = render_vehicle(specs[static_cast<size_t>(id)], opts.image_size,
                                             rec_rng.next_u64());
            SampleRecord rec;
            char name[64];
            snprintf(name, sizeof(name), "images/id%04d_img%d.ppm", id, j);
            rec.image_path = name;
            rec.caption = make_caption(specs[static_cast<size_t>(id)], rec_rng);
            rec.identity = id;
            rec.split = is_train[static_cast<size_t>(id)] ? "train" : "test";
            for (int k = 0; k < kNumParts; ++k) {
                PartAnnotation ann;
                ann.is_box = false;
                ann.grid = rr.grids[static_cast<size_t>(k)];
                rec.part_masks.push_back(ann);
            }
            write_ppm((fs::path(opts.out_dir) / rec.image_path).string(), rr.image);
            out.records.push_back(rec);
            ++record_index;
        }
    }
    out.manifest_path = (fs::path(opts.out_dir) / "manifest.jsonl").string();
    write_manifest(out.records, out.manifest_path);
    return out;
}

// ---- augmentation ----

struct AugmentOptions {
    double gamma_bright = 0.6;
    double gamma_dark = 1.6;
    double noise_sigma = 0.05;
};

inline Image apply_gamma(const Image& img, double gamma) {
    check(gamma > 0.0 && gamma != 1.0, "apply_gamma: gamma must be positive and not 1");
    Image out = img;
    for (double& v : out.px) v = std::pow(v < 0.0 ? 0.0 : v, gamma);
    return out;
}

inline Image apply_noise(const Image& img, double sigma, uint64_t seed) {
    Rng rng(seed);
    Image out = img;
    for (double& v : out.px) {
        v += rng.normal(0.0, sigma);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    return out;
}

// Three derived copies of a train record: over-exposed, under-exposed, and
// Gaussian-noised. Caption, identity, and part masks copy over verbatim.
inline std::vector<std::pair<SampleRecord, Image>> augment_record(
    const SampleRecord& rec, const Image& img, uint64_t seed,
    const AugmentOptions& opts = {}) {
    check(rec.split == "train", "augment_record: only train records are augmented");
    auto derived = [&rec](const char* tag) {
        SampleRecord r = rec;
        std::string path = rec.image_path;
        auto dot = path.rfind('.');
        check(dot != std::string::npos, "augment_record: image path has no extension");
        r.image_path = path.substr(0, dot) + "_" + tag + path.substr(dot);
        return r;
    };
    std::vector<std::pair<SampleRecord, Image>> out;
    out.emplace_back(derived("bright"), apply_gamma(img, opts.gamma_bright));
    out.emplace_back(derived("dark"), apply_gamma(img, opts.gamma_dark));
    out.emplace_back(derived("noise"), apply_noise(img, opts.noise_sigma, seed));
    return out;
}

// Expands the train split to exactly 4x records (original + three variants,
// inserted after their source); test records pass through untouched. Images
// for the variants are written next to the originals.
inline std::vector<SampleRecord> augment_manifest(const std::vector<SampleRecord>& records,
                                                  const std::string& manifest_path,
                                                  uint64_t seed,
                                                  const AugmentOptions& opts = {}) {
    std::vector<SampleRecord> out;
    for (size_t i = 0; i < records.size(); ++i) {
        const SampleRecord& rec = records[i];
        out.push_back(rec);
        if (rec.split != "train") continue;
        Image img = read_ppm(resolve_image_path(manifest_path, rec));
        auto variants = augment_record(rec, img, mix_seed(seed, static_cast<uint64_t>(i)), opts);
        for (auto& [vrec, vimg] : variants) {
            write_ppm(resolve_image_path(manifest_path, vrec), vimg);
            out.push_back(vrec);
        }
    }
    return out;
}

}  // namespace pfcvr
