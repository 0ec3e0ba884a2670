#pragma once

#include <string>
#include <vector>

#include "lad/rng.hpp"

namespace lad {

// Fixed instruction vocabulary: special tokens, function words, 8 room
// words, 16 object words. Token ids are stable across runs.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;

  static const Vocab& get();

  int size() const { return static_cast<int>(words_.size()); }
  int id(const std::string& word) const;
  const std::string& word(int id) const;

  int num_rooms() const { return static_cast<int>(room_tokens_.size()); }
  int num_objects() const { return static_cast<int>(object_tokens_.size()); }
  int room_token(int room_type) const;
  int object_token(int object_class) const;
  // -1 when the token is not a room / object word.
  int room_type_of(int token) const;
  int object_class_of(int token) const;
  const std::string& room_name(int room_type) const;
  const std::string& object_name(int object_class) const;

  std::string decode(const std::vector<int>& tokens) const;

 private:
  Vocab();
  std::vector<std::string> words_;
  std::vector<int> room_tokens_, object_tokens_;
  std::vector<int> room_of_token_, object_of_token_;
};

constexpr int kNumTemplates = 5;

// Renders template `tmpl` with the given room and object words.
std::vector<int> make_instruction(int tmpl, int room_type, int object_class);

struct ParsedInstruction {
  int room_type;
  int object_class;
};
// Extracts the first room word and first object word; errors if either is
// missing.
ParsedInstruction parse_instruction(const std::vector<int>& tokens);

}  // namespace lad
