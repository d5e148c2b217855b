#include "prodigy/checkpoint.hpp"

#include <sstream>

#include "prodigy/container.hpp"
#include "prodigy/error.hpp"

namespace prodigy {

using nlohmann::json;

namespace {

json put_store(Container& c, const TensorStore& s) {
  json arr = json::array();
  for (const auto& [name, m] : s.entries()) arr.push_back({{"name", name}, {"tensor", c.put(m)}});
  return arr;
}

TensorStore get_store(const Container& c, const json& arr) {
  TensorStore s;
  for (const json& e : arr) s.add(e.at("name").get<std::string>(), c.get(e.at("tensor")));
  return s;
}

void check_shapes(const ModelParams& loaded, const ModelConfig& cfg) {
  const ModelParams fresh = init_params(cfg, 0);
  auto same = [](const TensorStore& a, const TensorStore& b) {
    if (a.entries().size() != b.entries().size()) return false;
    for (std::size_t i = 0; i < a.entries().size(); ++i) {
      const auto& [na, ma] = a.entries()[i];
      const auto& [nb, mb] = b.entries()[i];
      if (na != nb || ma.rows() != mb.rows() || ma.cols() != mb.cols()) return false;
    }
    return true;
  };
  if (!same(loaded.weights, fresh.weights) || !same(loaded.bn_running, fresh.bn_running))
    throw LoadError("checkpoint tensors do not match its model configuration");
}

}  // namespace

void save_checkpoint(const CheckpointData& ck, const std::filesystem::path& path) {
  Container c;
  c.header["model_config"] = ck.params.config;
  c.header["label_salt"] = std::to_string(ck.params.label_salt);
  c.header["weights"] = put_store(c, ck.params.weights);
  c.header["bn_running"] = put_store(c, ck.params.bn_running);
  json groups = json::object();
  for (const auto& [name, store] : ck.groups) groups[name] = put_store(c, store);
  c.header["groups"] = groups;
  c.header["meta"] = ck.meta;
  write_container(path, kCheckpointMagic, kCheckpointVersion, c, true);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  Container c = read_container(path, kCheckpointMagic, kCheckpointVersion, true);
  CheckpointData ck;
  try {
    const json& h = c.header;
    ck.params.config = h.at("model_config").get<ModelConfig>();
    ck.params.config.validate();
    ck.params.label_salt = std::stoull(h.at("label_salt").get<std::string>());
    ck.params.weights = get_store(c, h.at("weights"));
    ck.params.bn_running = get_store(c, h.at("bn_running"));
    for (const auto& [name, arr] : h.at("groups").items()) ck.groups.emplace(name, get_store(c, arr));
    ck.meta = h.at("meta");
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": malformed checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(path.string() + ": " + e.what());
  } catch (const UsageError& e) {
    throw LoadError(path.string() + ": " + e.what());
  } catch (const std::logic_error& e) {
    throw LoadError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  check_shapes(ck.params, ck.params.config);
  return ck;
}

}  // namespace prodigy
