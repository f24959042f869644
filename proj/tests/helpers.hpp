/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>

#include <json.hpp>

#include "sdse/dse.hpp"

namespace sdse::test {

inline std::string fixture(const std::string &rel) { return std::string(SDSE_FIXTURE_DIR) + "/" + rel; }
inline ModelGraph model(const std::string &name) { return load_model(fixture("models/" + name + ".json")); }
inline DeviceSpec device(const std::string &name) { return DeviceSpec::load(fixture("devices/" + name + ".json")); }

/// Small graph documents built in code.
class Doc {
public:
  Doc(std::string name, std::vector<int64_t> shape, int word_length = 16) {
    doc_["name"] = std::move(name);
    doc_["input"] = {{"id", ""}, {"shape", shape}, {"word_length", word_length}};
    doc_["vertices"] = nlohmann::json::array();
    doc_["edges"] = nlohmann::json::array();
  }

  Doc &vertex(const std::string &id, const std::string &kind, nlohmann::json attrs = nlohmann::json::object()) {
    if (doc_["input"]["id"] == "")
      doc_["input"]["id"] = id;
    doc_["vertices"].push_back({{"id", id}, {"kind", kind}, {"attrs", attrs}});
    return *this;
  }
  Doc &edge(const std::string &src, const std::string &dst, int slot = 0) {
    doc_["edges"].push_back({{"src", src}, {"dst", dst}, {"dst_slot", slot}});
    return *this;
  }
  Doc &conv(const std::string &id, int k, int64_t filters, const std::string &from = "") {
    vertex(id, "Conv", {{"kernel", k}, {"stride", 1}, {"pad", k / 2}, {"filters", filters}});
    if (!from.empty())
      edge(from, id);
    return *this;
  }
  Doc &relu(const std::string &id, const std::string &from = "") {
    vertex(id, "Relu", {{"function", "relu"}});
    if (!from.empty())
      edge(from, id);
    return *this;
  }

  std::string text() const { return doc_.dump(); }
  ModelGraph graph() const { return parse_model(text()); }
  nlohmann::json &json() { return doc_; }

private:
  nlohmann::json doc_;
};

} // namespace sdse::test
