// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "nmbe/binio.hpp"

namespace nmbe::gradcore {

namespace {
constexpr int kFormatVersion = 1;

nlohmann::json entry_json(const std::string& name, const Tensor& t, std::int64_t offset) {
  return nlohmann::json{{"name", name}, {"shape", t.shape}, {"offset", offset}};
}
}  // namespace

Tensor* ParamSet::find_param(const std::string& name) {
  for (auto& p : params) {
    if (p.name == name) return &p.value;
  }
  return nullptr;
}

const Tensor* ParamSet::find_param(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p.value;
  }
  return nullptr;
}

std::vector<Tensor*> ParamSet::param_ptrs() {
  std::vector<Tensor*> out;
  out.reserve(params.size());
  for (auto& p : params) out.push_back(&p.value);
  return out;
}

void save_checkpoint(const std::string& dir, const ParamSet& set, const AdamState* opt,
                     const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["meta"] = meta;

  std::vector<double> raw;
  nlohmann::json entries = nlohmann::json::array();
  auto append = [&](const std::string& name, const Tensor& t) {
    entries.push_back(entry_json(name, t, static_cast<std::int64_t>(raw.size())));
    raw.insert(raw.end(), t.data.begin(), t.data.end());
  };
  for (const auto& p : set.params) append("param." + p.name, p.value);
  for (const auto& b : set.buffers) append("buffer." + b.name, b.value);
  if (opt != nullptr) {
    if (opt->m.size() != set.params.size()) {
      throw usage_error("save_checkpoint: optimizer tracks " + std::to_string(opt->m.size()) +
                        " tensors, parameter set has " + std::to_string(set.params.size()));
    }
    manifest["optimizer"] = {{"step", opt->step},
                             {"learning_rate", opt->learning_rate},
                             {"beta1", opt->beta1},
                             {"beta2", opt->beta2},
                             {"eps", opt->eps}};
    for (std::size_t i = 0; i < set.params.size(); ++i) {
      append("adam.m." + set.params[i].name, opt->m[i]);
      append("adam.v." + set.params[i].name, opt->v[i]);
    }
  }
  manifest["entries"] = entries;
  manifest["total_values"] = raw.size();

  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw io_error("cannot write " + dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
  binio::write_f64(dir + "/params.f64", raw);
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw io_error("cannot open " + dir + "/manifest.json");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed checkpoint manifest in " + dir + ": " + e.what());
  }
  if (manifest.value("format_version", -1) != kFormatVersion) {
    throw io_error("checkpoint format version mismatch in " + dir);
  }
  const std::int64_t total = manifest.at("total_values").get<std::int64_t>();
  const auto raw = binio::read_f64(dir + "/params.f64", total);

  Checkpoint ck;
  ck.meta = manifest.value("meta", nlohmann::json::object());

  std::vector<NamedTensor> adam_m, adam_v;
  for (const auto& e : manifest.at("entries")) {
    const std::string name = e.at("name").get<std::string>();
    const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    const std::int64_t offset = e.at("offset").get<std::int64_t>();
    const std::int64_t n = shape_numel(shape);
    if (offset < 0 || offset + n > total) {
      throw io_error("checkpoint entry '" + name + "' exceeds raw data bounds");
    }
    Tensor t(shape, std::vector<double>(raw.begin() + offset, raw.begin() + offset + n));
    if (name.rfind("param.", 0) == 0) {
      ck.set.params.push_back({name.substr(6), std::move(t)});
    } else if (name.rfind("buffer.", 0) == 0) {
      ck.set.buffers.push_back({name.substr(7), std::move(t)});
    } else if (name.rfind("adam.m.", 0) == 0) {
      adam_m.push_back({name.substr(7), std::move(t)});
    } else if (name.rfind("adam.v.", 0) == 0) {
      adam_v.push_back({name.substr(7), std::move(t)});
    } else {
      throw io_error("unknown checkpoint entry kind: " + name);
    }
  }

  if (manifest.contains("optimizer")) {
    const auto& o = manifest["optimizer"];
    AdamState st;
    st.step = o.at("step").get<std::int64_t>();
    st.learning_rate = o.at("learning_rate").get<double>();
    st.beta1 = o.at("beta1").get<double>();
    st.beta2 = o.at("beta2").get<double>();
    st.eps = o.at("eps").get<double>();
    if (adam_m.size() != ck.set.params.size() || adam_v.size() != ck.set.params.size()) {
      throw io_error("checkpoint optimizer moments do not cover all parameters");
    }
    for (std::size_t i = 0; i < ck.set.params.size(); ++i) {
      if (adam_m[i].name != ck.set.params[i].name) {
        throw io_error("checkpoint moment order mismatch at '" + adam_m[i].name + "'");
      }
      st.m.push_back(std::move(adam_m[i].value));
      st.v.push_back(std::move(adam_v[i].value));
    }
    ck.opt = std::move(st);
  }
  return ck;
}

}  // namespace nmbe::gradcore
