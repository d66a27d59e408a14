#include "../bytes.hpp"
#include "network_impl.hpp"

namespace speckle {

using nlohmann::json;

std::vector<std::uint8_t> encode_params(const NetworkParams<float>& params) {
  detail::check_params(params);
  json tensors = json::array();
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    tensors.push_back({{"name", "layer" + std::to_string(i) + ".weight"},
                       {"shape", {params.weights[i].rows(), params.weights[i].cols()}}});
    tensors.push_back({{"name", "layer" + std::to_string(i) + ".bias"}, {"shape", {params.biases[i].size()}}});
  }
  const std::string text =
      json{{"architecture", to_json(params.arch)}, {"seed", params.seed}, {"tensors", tensors}}.dump();
  bytes::Writer w;
  w.put(std::string_view("SPNN"));
  w.put(kParamsVersion);
  w.put(static_cast<std::uint64_t>(text.size()));
  w.put(std::string_view(text));
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    // Row-major weights.
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = params.weights[i];
    w.put_array(rm.data(), static_cast<std::size_t>(rm.size()));
    w.put_array(params.biases[i].data(), static_cast<std::size_t>(params.biases[i].size()));
  }
  return w.finish();
}

NetworkParams<float> decode_params(const std::vector<std::uint8_t>& data) {
  bytes::Reader r = bytes::open_container(data, "SPNN", kParamsVersion);
  const auto header_size = r.get<std::uint64_t>();
  if (header_size > r.remaining()) throw CorruptionError("header length exceeds file size");
  NetworkParams<float> p;
  try {
    const json header = json::parse(r.get_string(static_cast<std::size_t>(header_size)));
    p.arch = architecture_from_json(header.at("architecture"));
    p.seed = header.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("invalid params header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("invalid params architecture: ") + e.what());
  }
  const NetworkParams<float> shape = init_network<float>(p.arch, 0);
  for (std::size_t i = 0; i < shape.weights.size(); ++i) {
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(shape.weights[i].rows(),
                                                                             shape.weights[i].cols());
    r.get_array(rm.data(), static_cast<std::size_t>(rm.size()));
    p.weights.emplace_back(rm);
    Vector<float> b(shape.biases[i].size());
    r.get_array(b.data(), static_cast<std::size_t>(b.size()));
    p.biases.push_back(std::move(b));
  }
  if (r.remaining() != 0) throw CorruptionError("trailing bytes after tensors");
  return p;
}

void save_params(const NetworkParams<float>& params, const std::filesystem::path& path) {
  bytes::write_file(path, encode_params(params));
}

NetworkParams<float> load_params(const std::filesystem::path& path) {
  return decode_params(bytes::read_file(path));
}

NetworkParams<float> load_params(const std::filesystem::path& path, const Architecture& expected) {
  NetworkParams<float> p = load_params(path);
  if (!(p.arch == expected)) throw ArchitectureError("stored architecture does not match the expected one");
  return p;
}

}  // namespace speckle
