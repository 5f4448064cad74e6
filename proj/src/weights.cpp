// Copyright 2026 The p2d Authors
// SPDX-License-Identifier: Apache-2.0
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

#include "p2d/weights.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"

namespace p2d {
namespace {

constexpr char kMagic[4] = {'P', '2', 'D', 'W'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  bool done() const { return pos_ == bytes_.size(); }

  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw WeightError(WeightErrorKind::kTruncated,
                        source_ + ": truncated while reading " + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(std::vector<float>& out, std::size_t n, const char* what) {
    need(n * sizeof(float), what);
    out.resize(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedTensor* WeightStore::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_weights(const WeightStore& store) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, store.version);
  put_u32(out, static_cast<std::uint32_t>(store.config_echo.size()));
  out.insert(out.end(), store.config_echo.begin(), store.config_echo.end());
  for (const auto& t : store.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    std::size_t n = 1;
    for (auto d : t.shape) {
      put_u32(out, static_cast<std::uint32_t>(d));
      n *= d;
    }
    if (n != t.values.size()) {
      throw WeightError(WeightErrorKind::kShapeMismatch,
                        "tensor '" + t.name + "': payload does not match its shape");
    }
    const auto* raw = reinterpret_cast<const std::uint8_t*>(t.values.data());
    out.insert(out.end(), raw, raw + n * sizeof(float));
  }
  return out;
}

WeightStore decode_weights(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw WeightError(WeightErrorKind::kBadMagic, source + ": not a P2DW weight file");
  }
  Reader rd(bytes.subspan(4), source);
  WeightStore store;
  store.version = rd.u32("version");
  if (store.version != kWeightFormatVersion) {
    throw WeightError(WeightErrorKind::kVersionMismatch,
                      source + ": weight format version " + std::to_string(store.version) +
                          " (expected " + std::to_string(kWeightFormatVersion) + ")");
  }
  const auto echo_len = rd.u32("config length");
  store.config_echo = rd.str(echo_len, "config echo");
  std::set<std::string> names;
  while (!rd.done()) {
    NamedTensor t;
    const auto name_len = rd.u32("name length");
    t.name = rd.str(name_len, "tensor name");
    const auto rank = rd.u32("rank");
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      t.shape.push_back(rd.u32("dims"));
      n *= t.shape.back();
    }
    rd.floats(t.values, n, "tensor payload");
    if (!names.insert(t.name).second) {
      throw WeightError(WeightErrorKind::kDuplicateTensor,
                        source + ": tensor '" + t.name + "' appears twice");
    }
    store.tensors.push_back(std::move(t));
  }
  return store;
}

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
  const auto bytes = encode_weights(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WeightError(WeightErrorKind::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WeightError(WeightErrorKind::kIo, "write failed: " + path.string());
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightError(WeightErrorKind::kIo, "cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_weights(bytes, path.string());
}

// ---------------------------------------------------------------------------

namespace {

std::string key_string(PromptKind task, SceneClass scene) {
  return std::string(to_string(task)) + "/" + std::string(to_string(scene));
}

}  // namespace

void WeightRegistry::set(PromptKind task, SceneClass scene, std::filesystem::path path) {
  entries_[{task, scene}] = std::move(path);
}

bool WeightRegistry::contains(PromptKind task, SceneClass scene) const {
  return entries_.count({task, scene}) != 0;
}

const std::filesystem::path& WeightRegistry::path(PromptKind task, SceneClass scene) const {
  auto it = entries_.find({task, scene});
  if (it == entries_.end()) {
    throw std::out_of_range("no weights registered for " + key_string(task, scene) +
                            "; available: " + describe_keys());
  }
  return it->second;
}

std::vector<WeightRegistry::Key> WeightRegistry::keys() const {
  std::vector<Key> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::string WeightRegistry::describe_keys() const {
  if (entries_.empty()) return "(none)";
  std::string out;
  for (const auto& [k, v] : entries_) {
    if (!out.empty()) out += ", ";
    out += key_string(k.first, k.second);
  }
  return out;
}

void WeightRegistry::save(const std::filesystem::path& file) const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : entries_) j[key_string(k.first, k.second)] = v.generic_string();
  if (classifier_) j["classifier"] = classifier_->generic_string();
  if (file.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(file.parent_path(), ec);
  }
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write registry: " + file.string());
  out << j.dump(2) << "\n";
}

WeightRegistry WeightRegistry::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read registry: " + file.string());
  const auto j = nlohmann::json::parse(in);
  WeightRegistry reg;
  for (const auto& [key, value] : j.items()) {
    if (key == "classifier") {
      std::filesystem::path p = value.get<std::string>();
      reg.set_classifier(p.is_relative() ? file.parent_path() / p : p);
      continue;
    }
    const auto slash = key.find('/');
    if (slash == std::string::npos) throw std::runtime_error("bad registry key '" + key + "'");
    std::filesystem::path p = value.get<std::string>();
    if (p.is_relative()) p = file.parent_path() / p;
    reg.set(parse_prompt_kind(key.substr(0, slash)), parse_scene_class(key.substr(slash + 1)), p);
  }
  return reg;
}

}  // namespace p2d
