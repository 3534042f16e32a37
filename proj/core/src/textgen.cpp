#include "aunet/textgen.hpp"

#include <cmath>
#include <random>
#include <string>

namespace aunet {

namespace {

const char* const kWords[] = {
    "the", "of", "and", "a", "to", "in", "is", "it", "you", "that", "he", "was", "for",
    "on", "are", "with", "as", "his", "they", "be", "at", "one", "have", "this", "from",
    "or", "had", "by", "hot", "word", "but", "what", "some", "we", "can", "out", "other",
    "were", "all", "there", "when", "up", "use", "your", "how", "said", "an", "each",
    "she", "which", "do", "their", "time", "if", "will", "way", "about", "many", "then",
    "them", "write", "would", "like", "so", "these", "her", "long", "make", "thing",
    "see", "him", "two", "has", "look", "more", "day", "could", "go", "come", "did",
    "number", "sound", "no", "most", "people", "my", "over", "know", "water", "than",
    "call", "first", "who", "may", "down", "side", "been", "now", "find", "any", "new",
    "work", "part", "take", "get", "place", "made", "live", "where", "after", "back",
    "little", "only", "round", "man", "year", "came", "show", "every", "good", "me",
    "give", "our", "under", "name", "very", "through", "just", "form", "sentence",
    "great", "think", "say", "help", "low", "line", "differ", "turn", "cause", "much",
    "mean", "before", "move", "right", "boy", "old", "too", "same", "tell", "does",
    "set", "three", "want", "air", "well", "also", "play", "small", "end", "put",
    "home", "read", "hand", "port", "large", "spell", "add", "even", "land", "here",
    "must", "big", "high", "such", "follow", "act", "why", "ask", "men", "change",
    "went", "light", "kind", "off", "need", "house", "picture", "try", "us", "again",
    "animal", "point", "mother", "world", "near", "build", "self", "earth", "father",
    "head", "stand", "own", "page", "should", "country", "found", "answer", "school",
    "grow", "study", "still", "learn", "plant", "cover", "food", "sun", "four",
    "between", "state", "keep", "eye", "never", "last", "let", "thought", "city",
    "tree", "cross", "farm", "hard", "start", "might", "story", "saw", "far", "sea",
    "draw", "left", "late", "run", "while", "press", "close", "night", "real", "life",
    "few", "north", "open", "seem", "together", "next", "white", "children", "begin",
    "got", "walk", "example", "ease", "paper", "group", "always", "music", "those",
    "both", "mark", "often", "letter", "until", "mile", "river", "car", "feet",
    "care", "second", "book", "carry", "took", "science", "eat", "room", "friend",
    "began", "idea", "fish", "mountain", "stop", "once", "base", "hear", "horse",
    "cut", "sure", "watch", "color", "face", "wood", "main", "enough", "plain",
    "girl", "usual", "young", "ready", "above", "ever", "red", "list", "though",
    "feel", "talk", "bird", "soon", "body", "dog", "family", "direct", "pose",
    "leave", "song", "measure", "door", "product", "black", "short", "numeral",
    "class", "wind", "question", "happen", "complete", "ship", "area", "half",
    "rock", "order", "fire", "south", "problem", "piece", "told", "knew", "pass",
    "since", "top", "whole", "king", "space", "heard", "best", "hour", "better",
    "true", "during", "hundred", "five", "remember", "step", "early", "hold",
    "west", "ground", "interest", "reach", "fast", "verb", "sing", "listen", "six",
    "table", "travel", "less", "morning", "ten", "simple", "several", "vowel",
    "toward", "war", "lay", "against", "pattern", "slow", "center", "love",
    "person", "money", "serve", "appear", "road", "map", "rain", "rule", "govern",
    "pull", "cold", "notice", "voice", "unit", "power", "town", "fine", "certain",
    "fly", "fall", "lead", "cry", "dark", "machine", "note", "wait", "plan",
    "figure", "star", "box", "noun", "field", "rest", "correct", "able", "pound",
    "done", "beauty", "drive", "stood", "contain", "front", "teach", "week",
    "final", "gave", "green", "oh", "quick", "develop", "ocean", "warm", "free",
    "minute", "strong", "special", "mind", "behind", "clear", "tail", "produce",
    "fact", "street", "inch", "multiply", "nothing", "course", "stay", "wheel",
    "full", "force", "blue", "object", "decide", "surface", "deep", "moon",
    "island", "foot", "system", "busy", "test", "record", "boat", "common",
    "gold", "possible", "plane", "stead", "dry", "wonder", "laugh", "thousand",
    "ago", "ran", "check", "game", "shape", "equate", "miss", "brought", "heat",
    "snow", "tire", "bring", "yes", "distant", "fill", "east", "paint",
    "language", "among",
};
constexpr int kNumWords = static_cast<int>(sizeof(kWords) / sizeof(kWords[0]));

const char* const kAccented[] = {
    "caf\xc3\xa9", "na\xc3\xafve", "\xc3\xbc" "ber", "fa\xc3\xa7" "ade",
    "\xce\xbb\xce\xbf\xce\xb3\xce\xbf\xcf\x82", "\xd0\xbc\xd0\xb8\xd1\x80",
    "\xe6\x97\xa5\xe6\x9c\xac", "r\xc3\xa9sum\xc3\xa9", "\xc5\x9bwiat",
    "\xc3\xa6on", "se\xc3\xb1or", "\xe4\xb8\xad\xe6\x96\x87",
};
constexpr int kNumAccented = static_cast<int>(sizeof(kAccented) / sizeof(kAccented[0]));

class Sampler {
 public:
  Sampler(std::uint64_t seed, TextStyle style) : rng_(seed), style_(style) {
    // Zipf weights over the ranked word list. The exponent is steeper than
    // natural text so the corpus stays compressible by a small model.
    double total = 0;
    for (int i = 0; i < kNumWords; ++i) {
      weights_[i] = 1.0 / std::pow(static_cast<double>(i) + 1.5, 1.6);
      total += weights_[i];
    }
    for (int i = 0; i < kNumWords; ++i) weights_[i] /= total;
  }

  void sentence(std::string& out) {
    const int n = 4 + static_cast<int>(rng_() % 11);
    int prev = -1;
    for (int i = 0; i < n; ++i) {
      if (i > 0) out += ' ';
      const double roll = uniform();
      if (roll < 0.03) {
        number(out);
        prev = -1;
      } else if (style_ == TextStyle::mixed && roll < 0.06) {
        out += kAccented[rng_() % kNumAccented];
        prev = -1;
      } else if (prev >= 0 && roll < 0.36) {
        // Fixed collocation partner: deterministic given the previous word, so
        // context shaves entropy the way real phrases do.
        prev = (37 * prev + 11) % kNumWords;
        out += kWords[prev];
      } else {
        prev = word(out, i == 0);
      }
      if (i + 1 < n && uniform() < 0.07) out += ',';
    }
    if (style_ == TextStyle::mixed && uniform() < 0.05) {
      out += kClusters[rng_() % kNumClusters];
    } else {
      const double r = uniform();
      out += r < 0.82 ? "." : (r < 0.92 ? "?" : "!");
    }
  }

  void paragraph(std::string& out) {
    const int n = 2 + static_cast<int>(rng_() % 6);
    for (int i = 0; i < n; ++i) {
      if (i > 0) out += ' ';
      sentence(out);
    }
    if (style_ == TextStyle::mixed && uniform() < 0.2)
      out += uniform() < 0.5 ? "\r\n" : "\n\t";
    else
      out += uniform() < 0.3 ? "\n" : "\n\n";
  }

 private:
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

  int word(std::string& out, bool capitalize) {
    double r = uniform();
    int i = 0;
    while (i + 1 < kNumWords && r > weights_[i]) r -= weights_[i++];
    const char* w = kWords[i];
    if (capitalize) {
      out += static_cast<char>(w[0] - 'a' + 'A');
      out += w + 1;
    } else {
      out += w;
    }
    return i;
  }

  void number(std::string& out) {
    const int digits = 1 + static_cast<int>(rng_() % 4);
    for (int i = 0; i < digits; ++i)
      out += static_cast<char>('0' + (i == 0 ? 1 + rng_() % 9 : rng_() % 10));
  }

  static constexpr const char* kClusters[] = {"...", "?!", " --", ";", ":", ")."};
  static constexpr int kNumClusters = 6;

  std::mt19937_64 rng_;
  TextStyle style_;
  double weights_[kNumWords] = {};
};

}  // namespace

std::vector<std::uint8_t> synth_corpus(std::size_t n_bytes, std::uint64_t seed,
                                       TextStyle style) {
  Sampler s(seed, style);
  std::string text;
  text.reserve(n_bytes + 256);
  while (text.size() < n_bytes) s.paragraph(text);
  text.resize(n_bytes);
  return {text.begin(), text.end()};
}

}  // namespace aunet
