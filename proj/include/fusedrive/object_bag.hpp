// Copyright 2026 The fusedrive Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace fusedrive {

/// Surface forms mapped to canonical lowercase categories. Multi-word forms
/// are matched greedily, longest first, on word boundaries.
class Lexicon {
 public:
  Lexicon() = default;

  void add(const std::string& category, const std::string& surface_form);
  // Text format, one category per line: "category: form, form, ...".
  // Blank lines and lines starting with '#' are ignored.
  static Lexicon Parse(const std::string& text);
  static Lexicon Load(const std::filesystem::path& path);
  static Lexicon Default();

  // Category mentions in one text, in order of appearance.
  std::vector<std::string> match(const std::string& text) const;
  bool empty() const { return forms_.empty(); }

 private:
  // Tokenized surface form -> category.
  std::map<std::vector<std::string>, std::string> forms_;
  std::size_t max_form_tokens_ = 0;
};

// Lowercased alphanumeric word tokens.
std::vector<std::string> TokenizeWords(const std::string& text);

inline constexpr std::size_t kObjectBagSize = 10;

struct ObjectBag {
  // Descending frequency, ties in lexicographic order.
  std::vector<std::pair<std::string, std::uint64_t>> entries;

  std::vector<std::string> categories() const;
};

std::map<std::string, std::uint64_t> count_categories(
    const std::vector<std::string>& corpus, const Lexicon& lexicon);

// Top categories by mention count over the whole corpus. Throws kData on an
// empty corpus.
ObjectBag build_object_bag(const std::vector<std::string>& corpus,
                           const Lexicon& lexicon,
                           std::size_t size = kObjectBagSize);

// Category -> supercategory grouping, same text format as the lexicon
// ("supercategory: category, category"). Unlisted categories fall into
// "other".
class SupercategoryMap {
 public:
  static SupercategoryMap Parse(const std::string& text);
  static SupercategoryMap Load(const std::filesystem::path& path);
  // Six coarse groups; the grouping is a best guess, not a reference.
  static SupercategoryMap Default();

  const std::string& group_of(const std::string& category) const;
  std::map<std::string, std::uint64_t> group(
      const std::map<std::string, std::uint64_t>& category_counts) const;

 private:
  std::map<std::string, std::string> groups_;
  std::string other_ = "other";
};

// Histogram of non-empty descriptions per sample: count -> number of samples.
std::map<std::size_t, std::uint64_t> annotation_histogram(
    const std::vector<std::vector<std::string>>& per_sample_descriptions);

}  // namespace fusedrive
