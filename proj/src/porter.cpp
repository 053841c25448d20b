#include <string>

#include "textcaus/corpus.hpp"

// Porter's 1980 suffix-stripping algorithm, steps 1a through 5b.

namespace textcaus::corpus {

namespace {

bool is_consonant(const std::string& w, int i) {
  char c = w[i];
  switch (c) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
      return false;
    case 'y':
      return i == 0 ? true : !is_consonant(w, i - 1);
    default:
      return true;
  }
}

// Number of VC sequences in w[0..end].
int measure(const std::string& w, int end) {
  int m = 0;
  int i = 0;
  while (i <= end && is_consonant(w, i)) ++i;
  while (i <= end) {
    while (i <= end && !is_consonant(w, i)) ++i;
    if (i > end) break;
    ++m;
    while (i <= end && is_consonant(w, i)) ++i;
  }
  return m;
}

bool has_vowel(const std::string& w, int end) {
  for (int i = 0; i <= end; ++i)
    if (!is_consonant(w, i)) return true;
  return false;
}

bool double_consonant(const std::string& w, int end) {
  if (end < 1) return false;
  return w[end] == w[end - 1] && is_consonant(w, end);
}

// consonant-vowel-consonant, final consonant not w, x or y
bool cvc(const std::string& w, int end) {
  if (end < 2) return false;
  if (!is_consonant(w, end) || is_consonant(w, end - 1) || !is_consonant(w, end - 2))
    return false;
  char c = w[end];
  return c != 'w' && c != 'x' && c != 'y';
}

bool ends_with(const std::string& w, const char* suf, int* stem_end) {
  std::size_t n = std::string::traits_type::length(suf);
  if (w.size() < n) return false;
  if (w.compare(w.size() - n, n, suf) != 0) return false;
  *stem_end = static_cast<int>(w.size() - n) - 1;
  return true;
}

struct Rule {
  const char* suffix;
  const char* replacement;
};

// Applies the first matching rule whose stem has measure > min_m.
bool apply_rules(std::string& w, const Rule* rules, int n_rules, int min_m) {
  int stem_end;
  for (int r = 0; r < n_rules; ++r) {
    if (ends_with(w, rules[r].suffix, &stem_end)) {
      if (measure(w, stem_end) > min_m) {
        w.resize(stem_end + 1);
        w += rules[r].replacement;
      }
      return true;
    }
  }
  return false;
}

}  // namespace

std::string porter_stem(const std::string& word) {
  if (word.size() <= 2) return word;
  for (char c : word)
    if (!(c >= 'a' && c <= 'z')) return word;  // only plain lowercase words

  std::string w = word;
  int stem_end;

  // Step 1a
  if (ends_with(w, "sses", &stem_end)) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ies", &stem_end)) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ss", &stem_end)) {
    // keep
  } else if (ends_with(w, "s", &stem_end)) {
    w.resize(w.size() - 1);
  }

  // Step 1b
  bool fix_ending = false;
  if (ends_with(w, "eed", &stem_end)) {
    if (measure(w, stem_end) > 0) w.resize(w.size() - 1);
  } else if (ends_with(w, "ed", &stem_end) && has_vowel(w, stem_end)) {
    w.resize(stem_end + 1);
    fix_ending = true;
  } else if (ends_with(w, "ing", &stem_end) && has_vowel(w, stem_end)) {
    w.resize(stem_end + 1);
    fix_ending = true;
  }
  if (fix_ending) {
    int end = static_cast<int>(w.size()) - 1;
    if (ends_with(w, "at", &stem_end) || ends_with(w, "bl", &stem_end) ||
        ends_with(w, "iz", &stem_end)) {
      w.push_back('e');
    } else if (double_consonant(w, end) && w[end] != 'l' && w[end] != 's' && w[end] != 'z') {
      w.resize(w.size() - 1);
    } else if (measure(w, end) == 1 && cvc(w, end)) {
      w.push_back('e');
    }
  }

  // Step 1c
  if (ends_with(w, "y", &stem_end) && has_vowel(w, stem_end)) w.back() = 'i';

  // Step 2
  static const Rule step2[] = {
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
      {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
      {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
      {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
      {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
  };
  apply_rules(w, step2, 20, 0);

  // Step 3
  static const Rule step3[] = {
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
      {"ical", "ic"},  {"ful", ""},   {"ness", ""},
  };
  apply_rules(w, step3, 7, 0);

  // Step 4
  static const Rule step4a[] = {
      {"al", ""},  {"ance", ""}, {"ence", ""}, {"er", ""},   {"ic", ""},
      {"able", ""}, {"ible", ""}, {"ant", ""},  {"ement", ""}, {"ment", ""},
      {"ent", ""},
  };
  if (!apply_rules(w, step4a, 11, 1)) {
    if (ends_with(w, "ion", &stem_end)) {
      if (measure(w, stem_end) > 1 && stem_end >= 0 &&
          (w[stem_end] == 's' || w[stem_end] == 't'))
        w.resize(stem_end + 1);
    } else {
      static const Rule step4b[] = {
          {"ou", ""}, {"ism", ""}, {"ate", ""}, {"iti", ""},
          {"ous", ""}, {"ive", ""}, {"ize", ""},
      };
      apply_rules(w, step4b, 7, 1);
    }
  }

  // Step 5a
  if (ends_with(w, "e", &stem_end)) {
    int m = measure(w, stem_end);
    if (m > 1 || (m == 1 && !cvc(w, stem_end))) w.resize(w.size() - 1);
  }
  // Step 5b
  {
    int end = static_cast<int>(w.size()) - 1;
    if (measure(w, end) > 1 && double_consonant(w, end) && w[end] == 'l')
      w.resize(w.size() - 1);
  }
  return w;
}

}  // namespace textcaus::corpus
