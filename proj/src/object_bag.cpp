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

#include "fusedrive/object_bag.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "fusedrive/binary_io.hpp"
#include "fusedrive/error.hpp"

namespace fusedrive {
namespace {

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

// "key: a, b, c" lines -> (key, [a, b, c]).
std::vector<std::pair<std::string, std::vector<std::string>>> ParseGroups(
    const std::string& text, const char* what) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = Trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      Fail(ErrorKind::kFormat, std::string(what) + " line " + std::to_string(line_no) +
                                   ": expected 'name: item, item'");
    }
    std::string key = Trim(line.substr(0, colon));
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    std::vector<std::string> items;
    std::istringstream rest(line.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      item = Trim(item);
      if (!item.empty()) items.push_back(item);
    }
    out.emplace_back(std::move(key), std::move(items));
  }
  return out;
}

}  // namespace

std::vector<std::string> TokenizeWords(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

void Lexicon::add(const std::string& category, const std::string& surface_form) {
  std::vector<std::string> tokens = TokenizeWords(surface_form);
  if (tokens.empty()) return;
  std::string canonical;
  for (const std::string& t : TokenizeWords(category)) {
    if (!canonical.empty()) canonical += ' ';
    canonical += t;
  }
  if (canonical.empty()) Fail(ErrorKind::kData, "lexicon category name is empty");
  max_form_tokens_ = std::max(max_form_tokens_, tokens.size());
  forms_[std::move(tokens)] = std::move(canonical);
}

Lexicon Lexicon::Parse(const std::string& text) {
  Lexicon lex;
  for (const auto& [category, forms] : ParseGroups(text, "lexicon")) {
    lex.add(category, category);
    for (const std::string& f : forms) lex.add(category, f);
  }
  return lex;
}

Lexicon Lexicon::Load(const std::filesystem::path& path) {
  return Parse(ReadFileBytes(path));
}

Lexicon Lexicon::Default() {
  return Parse(
      "car: cars, sedan, sedans, suv, suvs, vehicle, vehicles, van, vans, taxi\n"
      "truck: trucks, lorry\n"
      "bus: buses\n"
      "motorcycle: motorcycles, motorbike, scooter\n"
      "bicycle: bicycles, bike, bikes\n"
      "pedestrian: pedestrians, person, people, man, woman, walker, walkers\n"
      "cyclist: cyclists, rider, riders\n"
      "traffic light: traffic lights, signal light, stoplight\n"
      "traffic sign: traffic signs, road sign, road signs, sign, signs\n"
      "stop sign: stop signs\n"
      "crosswalk: crosswalks, zebra crossing, pedestrian crossing\n"
      "lane: lanes, lane marking, lane markings\n"
      "road: roads, street, streets\n"
      "intersection: intersections, junction\n"
      "building: buildings\n"
      "tree: trees\n"
      "pole: poles, lamp post\n"
      "barrier: barriers, cone, cones, construction\n");
}

std::vector<std::string> Lexicon::match(const std::string& text) const {
  const std::vector<std::string> tokens = TokenizeWords(text);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    const std::size_t longest = std::min(max_form_tokens_, tokens.size() - i);
    for (std::size_t len = longest; len >= 1; --len) {
      std::vector<std::string> window(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + len));
      auto it = forms_.find(window);
      if (it != forms_.end()) {
        out.push_back(it->second);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

std::vector<std::string> ObjectBag::categories() const {
  std::vector<std::string> out;
  for (const auto& [name, count] : entries) out.push_back(name);
  return out;
}

std::map<std::string, std::uint64_t> count_categories(
    const std::vector<std::string>& corpus, const Lexicon& lexicon) {
  std::map<std::string, std::uint64_t> counts;
  for (const std::string& text : corpus)
    for (const std::string& category : lexicon.match(text)) ++counts[category];
  return counts;
}

ObjectBag build_object_bag(const std::vector<std::string>& corpus,
                           const Lexicon& lexicon, std::size_t size) {
  const bool empty = std::all_of(corpus.begin(), corpus.end(),
                                 [](const std::string& s) { return s.empty(); });
  if (empty) Fail(ErrorKind::kData, "object bag: description corpus is empty");
  const auto counts = count_categories(corpus, lexicon);
  ObjectBag bag;
  bag.entries.assign(counts.begin(), counts.end());
  // std::map iteration is already lexicographic, so a stable sort on count
  // keeps ties in lexicographic order.
  std::stable_sort(bag.entries.begin(), bag.entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (bag.entries.size() > size) bag.entries.resize(size);
  return bag;
}

SupercategoryMap SupercategoryMap::Parse(const std::string& text) {
  SupercategoryMap map;
  for (const auto& [group, categories] : ParseGroups(text, "supercategory map")) {
    for (const std::string& c : categories) {
      std::string key;
      for (const std::string& t : TokenizeWords(c)) {
        if (!key.empty()) key += ' ';
        key += t;
      }
      map.groups_[key] = group;
    }
  }
  return map;
}

SupercategoryMap SupercategoryMap::Load(const std::filesystem::path& path) {
  return Parse(ReadFileBytes(path));
}

SupercategoryMap SupercategoryMap::Default() {
  return Parse(
      "# Best-guess grouping; replace with a curated mapping file.\n"
      "vehicle: car, truck, bus, motorcycle, bicycle\n"
      "person: pedestrian, cyclist\n"
      "traffic control: traffic light, traffic sign, stop sign\n"
      "road layout: crosswalk, lane, road, intersection\n"
      "roadside: building, tree, pole, barrier\n");
}

const std::string& SupercategoryMap::group_of(const std::string& category) const {
  auto it = groups_.find(category);
  return it == groups_.end() ? other_ : it->second;
}

std::map<std::string, std::uint64_t> SupercategoryMap::group(
    const std::map<std::string, std::uint64_t>& category_counts) const {
  std::map<std::string, std::uint64_t> out;
  for (const auto& [category, count] : category_counts) out[group_of(category)] += count;
  return out;
}

std::map<std::size_t, std::uint64_t> annotation_histogram(
    const std::vector<std::vector<std::string>>& per_sample_descriptions) {
  std::map<std::size_t, std::uint64_t> hist;
  for (const auto& descriptions : per_sample_descriptions) {
    const auto n = static_cast<std::size_t>(
        std::count_if(descriptions.begin(), descriptions.end(),
                      [](const std::string& d) { return !d.empty(); }));
    ++hist[n];
  }
  return hist;
}

}  // namespace fusedrive
