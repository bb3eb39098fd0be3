#pragma once

#include <array>
#include <string>
#include <vector>

namespace pfcvr {

// Domain vocabulary shared by the caption generator, the caption parser and
// the tokenizer. Part order is fixed and indexes every per-part tensor.
inline const std::array<std::string, 6> kPartNames = {
    "windows", "wheels", "doors", "mirrors", "lights", "roof"};

inline const std::array<std::vector<std::string>, 6> kPartValues = {{
    {"tinted", "clear", "frosted"},   // windows
    {"silver", "black", "bronze"},    // wheels
    {"two", "four"},                  // doors
    {"black", "white", "chrome"},     // mirrors
    {"round", "square", "oval"},      // lights
    {"solid", "glass", "striped"},    // roof
}};

inline const std::vector<std::string> kBodyColors = {
    "red", "blue", "green", "yellow", "orange", "purple", "gray", "brown"};

inline const std::vector<std::string> kBodyShapes = {
    "sedan", "hatchback", "pickup", "van"};

// Every non-slot word used by the caption templates. Kept here so the
// tokenizer vocabulary provably covers generated captions.
inline const std::vector<std::string> kTemplateWords = {
    "this",  "image",    "shows",    "a",        "captured", "from",     "three",
    "quarter", "view",   "the",      "photo",    "presents", "seen",     "at",
    "street", "level",   "pictured", "here",     "is",       "standing", "in",
    "an",     "open",    "lot",      "occupies", "center",   "of",       "daytime",
    "it",     "rides",   "on",       "set",      "car",      "rolls",    "cabin",
    "fitted", "with",    "all",      "around",   "sit",      "there",    "are",
    "along",  "its",     "body",     "carries",  "total",    "extend",   "either",
    "side",   "sides",   "hold",     "small",    "up",       "front",    "nose",
    "marked", "by",      "top",      "finished", "above",    "everything",
    "rests",  "overall", "condition", "appears", "clean",    "and",      "paint",
    "reflects", "softly", "nothing", "else",     "crowds",   "frame",    "parked",
    "vehicle", "scene",  "plain",    "even",     "light",    "across",   "pavement",
    "dust",   "minor",   "wear",     "mark",     "otherwise", "tidy",    "machine"};

}  // namespace pfcvr
