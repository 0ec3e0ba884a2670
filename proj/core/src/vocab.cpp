#include "lad/vocab.hpp"

#include <unordered_map>

#include "lad/error.hpp"

namespace lad {

namespace {

const std::vector<std::string> kFunctionWords = {
    "go",   "to",   "the",  "and",  "then",  "find", "walk", "head",
    "touch", "check", "inspect", "in", "there", "stop", "near", "room",
    "a",    "with", "left", "right", "forward", "back", "open", "close",
    "look", "see",  "take", "put",  "on",    "under", "over", "by",
    "next", "of",   "it",   "is",   "at",    "this"};

const std::vector<std::string> kRoomWords = {
    "bedroom",     "bathroom", "kitchen", "living_room",
    "dining_room", "office",   "hallway", "garage"};

const std::vector<std::string> kObjectWords = {
    "bed",          "wardrobe",   "mirror", "bathtub",  "oven",
    "fridge",       "sofa",       "television", "dining_table", "chandelier",
    "desk",         "computer",   "coat_rack",  "painting", "car",
    "toolbox"};

std::unordered_map<std::string, int>& word_index() {
  static std::unordered_map<std::string, int> index;
  return index;
}

}  // namespace

Vocab::Vocab() {
  words_ = {"[pad]", "[mask]"};
  for (const auto& w : kFunctionWords) words_.push_back(w);
  room_of_token_.assign(words_.size() + kRoomWords.size() + kObjectWords.size(), -1);
  object_of_token_.assign(room_of_token_.size(), -1);
  for (size_t i = 0; i < kRoomWords.size(); ++i) {
    room_tokens_.push_back(static_cast<int>(words_.size()));
    room_of_token_[words_.size()] = static_cast<int>(i);
    words_.push_back(kRoomWords[i]);
  }
  for (size_t i = 0; i < kObjectWords.size(); ++i) {
    object_tokens_.push_back(static_cast<int>(words_.size()));
    object_of_token_[words_.size()] = static_cast<int>(i);
    words_.push_back(kObjectWords[i]);
  }
  for (size_t i = 0; i < words_.size(); ++i)
    word_index()[words_[i]] = static_cast<int>(i);
}

const Vocab& Vocab::get() {
  static Vocab v;
  return v;
}

int Vocab::id(const std::string& word) const {
  auto it = word_index().find(word);
  LAD_CHECK(it != word_index().end(), "vocab: unknown word '", word, "'");
  return it->second;
}

const std::string& Vocab::word(int id) const {
  LAD_CHECK(id >= 0 && id < size(), "vocab: token id ", id, " out of range");
  return words_[static_cast<size_t>(id)];
}

int Vocab::room_token(int room_type) const {
  LAD_CHECK(room_type >= 0 && room_type < num_rooms(), "vocab: bad room type ",
            room_type);
  return room_tokens_[static_cast<size_t>(room_type)];
}

int Vocab::object_token(int object_class) const {
  LAD_CHECK(object_class >= 0 && object_class < num_objects(),
            "vocab: bad object class ", object_class);
  return object_tokens_[static_cast<size_t>(object_class)];
}

int Vocab::room_type_of(int token) const {
  if (token < 0 || token >= size()) return -1;
  return room_of_token_[static_cast<size_t>(token)];
}

int Vocab::object_class_of(int token) const {
  if (token < 0 || token >= size()) return -1;
  return object_of_token_[static_cast<size_t>(token)];
}

const std::string& Vocab::room_name(int room_type) const {
  return word(room_token(room_type));
}

const std::string& Vocab::object_name(int object_class) const {
  return word(object_token(object_class));
}

std::string Vocab::decode(const std::vector<int>& tokens) const {
  std::string out;
  for (int t : tokens) {
    if (!out.empty()) out += ' ';
    out += word(t);
  }
  return out;
}

std::vector<int> make_instruction(int tmpl, int room_type, int object_class) {
  LAD_CHECK(tmpl >= 0 && tmpl < kNumTemplates, "instruction: bad template ", tmpl);
  const Vocab& v = Vocab::get();
  const int room = v.room_token(room_type);
  const int obj = v.object_token(object_class);
  auto w = [&](const char* s) { return v.id(s); };
  switch (tmpl) {
    case 0:
      return {w("go"), w("to"), w("the"), room, w("and"), w("find"), w("the"), obj};
    case 1:
      return {w("walk"), w("to"), w("the"), room, w("then"), w("touch"), w("the"), obj};
    case 2:
      return {w("head"), w("to"), w("the"), room, w("and"), w("check"), w("the"), obj};
    case 3:
      return {w("find"), w("the"), obj, w("in"), w("the"), room};
    default:
      return {w("go"),  w("to"),  w("the"), room, w("and"),
              w("inspect"), w("the"), obj,  w("there")};
  }
}

ParsedInstruction parse_instruction(const std::vector<int>& tokens) {
  const Vocab& v = Vocab::get();
  ParsedInstruction out{-1, -1};
  for (int t : tokens) {
    if (out.room_type < 0) out.room_type = v.room_type_of(t);
    if (out.object_class < 0) out.object_class = v.object_class_of(t);
  }
  LAD_CHECK(out.room_type >= 0, "instruction: no room word found");
  LAD_CHECK(out.object_class >= 0, "instruction: no object word found");
  return out;
}

}  // namespace lad
