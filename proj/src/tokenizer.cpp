#include <cctype>
#include <cstdint>

#include "unipaint/backbone.hpp"

namespace unipaint {

namespace {

constexpr const char* kWords[] = {
    "a", "an", "the", "of", "in", "on", "with", "and", "at", "by", "to", "for", "from", "is",
    "photo", "picture", "image", "painting", "drawing", "sketch", "render", "style", "portrait",
    "red", "green", "blue", "yellow", "orange", "purple", "pink", "brown", "black", "white",
    "gray", "grey", "gold", "silver", "dark", "light", "bright", "pale", "colorful",
    "small", "large", "big", "tiny", "huge", "tall", "short", "long", "round", "square",
    "old", "new", "young", "cute", "beautiful", "wooden", "metal", "glass", "stone", "plastic",
    "dog", "cat", "bird", "horse", "cow", "sheep", "tiger", "lion", "leopard", "bear", "panda",
    "fox", "wolf", "rabbit", "mouse", "duck", "owl", "eagle", "fish", "frog", "turtle", "snake",
    "elephant", "giraffe", "zebra", "monkey", "butterfly", "bee", "puppy", "kitten", "corgi",
    "person", "man", "woman", "boy", "girl", "child", "baby", "face", "head", "hand", "eye",
    "hat", "glasses", "shirt", "dress", "shoe", "bag", "umbrella", "scarf", "mask",
    "car", "truck", "bus", "bicycle", "boat", "ship", "train", "airplane", "motorcycle",
    "house", "building", "tower", "bridge", "castle", "church", "window", "door", "wall",
    "roof", "road", "street", "fence", "bench", "chair", "table", "sofa", "bed", "lamp",
    "vase", "cup", "mug", "bottle", "bowl", "plate", "clock", "book", "toy", "ball", "teddy",
    "tree", "flower", "flowers", "rose", "sunflower", "grass", "leaf", "leaves", "plant",
    "forest", "garden", "field", "mountain", "hill", "river", "lake", "sea", "ocean", "beach",
    "sand", "rock", "snow", "ice", "water", "sky", "cloud", "clouds", "sun", "moon", "star",
    "rain", "fire", "smoke", "city", "village", "park", "desert", "island", "waterfall",
    "apple", "banana", "strawberry", "cake", "cheesecake", "bread", "pizza",
    "burger", "donut", "cookie", "coffee", "tea", "wine", "fruit", "vegetable",
    "sitting", "standing", "running", "flying", "sleeping", "swimming", "walking", "jumping",
    "looking", "holding", "wearing", "smiling", "playing", "lying",
    "top", "bottom", "left", "right", "middle", "center", "front", "behind", "near", "inside",
    "realistic", "photorealistic", "cartoon", "anime", "oil", "watercolor", "detailed",
    "sharp", "blurry", "vintage", "modern", "sks"};

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Tokenizer::Tokenizer() {
  int next = 2;
  for (const char* w : kWords) {
    if (index_.emplace(w, next).second) {
      words_.emplace_back(w);
      ++next;
    }
  }
  first_oov_ = next;
}

int Tokenizer::word_id(std::string_view word) const {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  return first_oov_ + static_cast<int>(fnv1a(word) % kOovBuckets);
}

std::string Tokenizer::word(int id) const {
  if (id == kBos) return "<bos>";
  if (id == kEos) return "<eos>";
  if (id >= 2 && id < first_oov_) return words_[static_cast<std::size_t>(id - 2)];
  if (id >= first_oov_ && id < vocab_size()) return "<oov:" + std::to_string(id - first_oov_) + ">";
  throw Error(ErrorKind::OutOfRange, "token id " + std::to_string(id) + " outside vocabulary");
}

TokenSequence Tokenizer::tokenize(std::string_view text) const {
  TokenSequence seq;
  seq.ids.push_back(kBos);
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      seq.ids.push_back(word_id(current));
      current.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '_' || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  seq.ids.push_back(kEos);
  return seq;
}

const Tokenizer& default_tokenizer() {
  static const Tokenizer tokenizer;
  return tokenizer;
}

}  // namespace unipaint
