#pragma once

#include "apvit/config.hpp"
#include "apvit/data.hpp"
#include "apvit/model.hpp"
#include "apvit/prototype_bank.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace apvit {

// Single-file checkpoint: magic, format version, a JSON header describing
// config, dataset statistics, parameter shapes and prototype provenance,
// then all parameter arrays as float64 in header order.
inline constexpr char kCheckpointMagic[4] = {'A', 'P', 'V', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  ExperimentConfig config;
  DatasetStats stats;
  int trained_epochs = 0;
  int best_epoch = -1;
  double best_val_metric = 0.0;
};

template <class S>
struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::unique_ptr<Model<S>> model;
  std::unique_ptr<PrototypeBank<S>> bank;
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, const Model<S>& model,
                     const PrototypeBank<S>& bank, const CheckpointMeta& meta) {
  nlohmann::json header;
  header["config"] = nlohmann::json::parse(config_to_json_text(meta.config));
  header["stats"] = {{"mean", meta.stats.mean}, {"stdev", meta.stats.stdev}};
  header["trained_epochs"] = meta.trained_epochs;
  header["best_epoch"] = meta.best_epoch;
  header["best_val_metric"] = meta.best_val_metric;

  std::vector<const Param<S>*> params;
  for (const auto* p : model.parameters()) params.push_back(p);
  for (int a = 0; a < bank.attribute_count(); ++a)
    for (int v = 0; v < bank.value_count(a); ++v) params.push_back(&bank.cell(a, v));
  nlohmann::json jp = nlohmann::json::array();
  for (const auto* p : params)
    jp.push_back({{"name", p->name},
                  {"rows", p->w.rows()},
                  {"cols", p->w.cols()},
                  {"prototype", p->is_prototype}});
  header["params"] = jp;

  nlohmann::json jprov = nlohmann::json::array();
  for (int a = 0; a < bank.attribute_count(); ++a)
    for (int v = 0; v < bank.value_count(a); ++v)
      for (int s = 0; s < bank.slots(); ++s) {
        const ProtoProvenance& pv = bank.provenance(a, v, s);
        if (!pv.valid) continue;
        jprov.push_back({{"attribute", a},
                         {"value", v},
                         {"slot", s},
                         {"sample_id", pv.sample_id},
                         {"epoch", pv.epoch},
                         {"distance", pv.distance}});
      }
  header["provenance"] = jprov;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  os.write(kCheckpointMagic, 4);
  detail::write_u32(os, kCheckpointVersion);
  std::string htext = header.dump();
  detail::write_u64(os, htext.size());
  os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto* p : params) {
    for (Eigen::Index r = 0; r < p->w.rows(); ++r)
      for (Eigen::Index c = 0; c < p->w.cols(); ++c) {
        double v = static_cast<double>(p->w(r, c));
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  }
  if (!os) throw DataError("short write on checkpoint: " + path);
}

template <class S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::uint32_t version = detail::read_u32(is);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint format version " + std::to_string(version) +
                    " not supported (this build reads version " +
                    std::to_string(kCheckpointVersion) + "): " + path);
  std::uint64_t hlen = detail::read_u64(is);
  std::string htext(hlen, '\0');
  is.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw DataError("truncated checkpoint header: " + path);
  nlohmann::json header = nlohmann::json::parse(htext, nullptr, false);
  if (header.is_discarded())
    throw DataError("corrupt checkpoint header: " + path);

  LoadedCheckpoint<S> out;
  out.meta.config = config_from_json_text(header.at("config").dump());
  out.meta.stats.mean = header.at("stats").at("mean").get<std::vector<double>>();
  out.meta.stats.stdev = header.at("stats").at("stdev").get<std::vector<double>>();
  out.meta.trained_epochs = header.value("trained_epochs", 0);
  out.meta.best_epoch = header.value("best_epoch", -1);
  out.meta.best_val_metric = header.value("best_val_metric", 0.0);

  out.model = std::make_unique<Model<S>>(out.meta.config.model, 0);
  out.bank = std::make_unique<PrototypeBank<S>>(
      out.meta.config.model.schema, out.meta.config.model.embed_dim,
      out.meta.config.prototypes, 0);

  std::vector<Param<S>*> params;
  for (auto* p : out.model->parameters()) params.push_back(p);
  for (int a = 0; a < out.bank->attribute_count(); ++a)
    for (int v = 0; v < out.bank->value_count(a); ++v)
      params.push_back(&out.bank->cell(a, v));

  const nlohmann::json& jp = header.at("params");
  if (jp.size() != params.size())
    throw DataError("checkpoint lists " + std::to_string(jp.size()) +
                    " parameters, model expects " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& e = jp.at(i);
    if (e.at("name").get<std::string>() != params[i]->name ||
        e.at("rows").get<Eigen::Index>() != params[i]->w.rows() ||
        e.at("cols").get<Eigen::Index>() != params[i]->w.cols())
      throw DataError("checkpoint parameter mismatch at '" +
                      e.at("name").get<std::string>() + "' (expected '" +
                      params[i]->name + "')");
    for (Eigen::Index r = 0; r < params[i]->w.rows(); ++r)
      for (Eigen::Index c = 0; c < params[i]->w.cols(); ++c) {
        double v = 0.0;
        is.read(reinterpret_cast<char*>(&v), sizeof(v));
        params[i]->w(r, c) = static_cast<S>(v);
      }
  }
  if (!is) throw DataError("truncated checkpoint arrays: " + path);

  for (const auto& e : header.at("provenance")) {
    ProtoProvenance pv;
    pv.valid = true;
    pv.sample_id = e.at("sample_id").get<std::string>();
    pv.epoch = e.at("epoch").get<int>();
    pv.distance = e.at("distance").get<double>();
    out.bank->set_provenance(e.at("attribute").get<int>(),
                             e.at("value").get<int>(), e.at("slot").get<int>(), pv);
  }
  return out;
}

}  // namespace apvit
