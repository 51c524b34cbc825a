#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dibjscc/errors.hpp"
#include "dibjscc/io.hpp"
#include "dibjscc/nn/network.hpp"
#include "dibjscc/rng.hpp"
#include "dibjscc/tensor.hpp"
#include "dibjscc/version.hpp"

namespace dibjscc {

// Geometry shared by every network in a run: image shape, codeword split
// sizes, label cardinality, and the two MLP widths.
struct ArchSpec {
  std::size_t image_channels = 3;
  std::size_t image_height = 28;
  std::size_t image_width = 28;
  std::size_t m_t = 48;  // public subcodeword length
  std::size_t m_s = 16;  // private subcodeword length
  int private_classes = 10;
  std::size_t classifier_hidden = 64;
  std::size_t discriminator_hidden = 128;

  std::size_t total_code() const { return m_t + m_s; }
  std::size_t image_size() const {
    return image_channels * image_height * image_width;
  }

  void validate() const {
    if (image_channels != 3) {
      throw config_error("arch: only 3-channel images are supported");
    }
    if (image_height % 4 != 0 || image_width % 4 != 0 || image_height == 0) {
      throw config_error(
          "arch: image sides must be positive multiples of 4 (two stride-2 "
          "stages)");
    }
    if (m_t == 0 || m_s == 0) {
      throw config_error("arch: subcodeword lengths must be positive");
    }
    if (private_classes < 2) {
      throw config_error("arch: private_classes must be >= 2");
    }
    if (classifier_hidden == 0 || discriminator_hidden == 0) {
      throw config_error("arch: hidden widths must be positive");
    }
  }

  nlohmann::json to_json() const {
    return {{"image_channels", image_channels},
            {"image_height", image_height},
            {"image_width", image_width},
            {"m_t", m_t},
            {"m_s", m_s},
            {"private_classes", private_classes},
            {"classifier_hidden", classifier_hidden},
            {"discriminator_hidden", discriminator_hidden}};
  }

  static ArchSpec from_json(const nlohmann::json& j) {
    ArchSpec a;
    a.image_channels = j.at("image_channels").get<std::size_t>();
    a.image_height = j.at("image_height").get<std::size_t>();
    a.image_width = j.at("image_width").get<std::size_t>();
    a.m_t = j.at("m_t").get<std::size_t>();
    a.m_s = j.at("m_s").get<std::size_t>();
    a.private_classes = j.at("private_classes").get<int>();
    a.classifier_hidden = j.at("classifier_hidden").get<std::size_t>();
    a.discriminator_hidden = j.at("discriminator_hidden").get<std::size_t>();
    a.validate();
    return a;
  }

  bool operator==(const ArchSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Builders. Conv trunks downsample twice (H -> H/4), mirrored by the
// decoder's two transposed-conv stages.

inline nn::Sequential make_public_encoder(const ArchSpec& a) {
  a.validate();
  std::size_t fh = a.image_height / 4, fw = a.image_width / 4;
  nn::Sequential net;
  net.add(std::make_unique<nn::Conv2d>(a.image_channels, 32, 3, 2, 1));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Conv2d>(32, 64, 3, 2, 1));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Conv2d>(64, 64, 3, 1, 1));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Flatten>());
  net.add(std::make_unique<nn::Dense>(64 * fh * fw, a.m_t));
  return net;
}

inline nn::Sequential make_private_encoder(const ArchSpec& a) {
  a.validate();
  std::size_t fh = a.image_height / 4, fw = a.image_width / 4;
  nn::Sequential net;
  net.add(std::make_unique<nn::Conv2d>(a.image_channels, 16, 3, 2, 1));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Conv2d>(16, 32, 3, 2, 1));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Flatten>());
  net.add(std::make_unique<nn::Dense>(32 * fh * fw, a.m_s));
  return net;
}

namespace detail {

inline nn::Sequential decoder_from_width(const ArchSpec& a,
                                         std::size_t in_width) {
  a.validate();
  std::size_t fh = a.image_height / 4, fw = a.image_width / 4;
  nn::Sequential net;
  net.add(std::make_unique<nn::Dense>(in_width, 64 * fh * fw));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Reshape>(64, fh, fw));
  net.add(std::make_unique<nn::ConvTranspose2d>(64, 32, 4, 2, 1));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::ConvTranspose2d>(32, 16, 4, 2, 1));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Conv2d>(16, a.image_channels, 3, 1, 1));
  net.add(std::make_unique<nn::Sigmoid>());
  return net;
}

}  // namespace detail

// Full-codeword decoder; the saturating output keeps pixels in [0,1].
inline nn::Sequential make_decoder(const ArchSpec& a) {
  return detail::decoder_from_width(a, a.total_code());
}

inline nn::Sequential make_private_classifier(const ArchSpec& a) {
  a.validate();
  nn::Sequential net;
  net.add(std::make_unique<nn::Dense>(a.m_s, a.classifier_hidden));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Dense>(a.classifier_hidden,
                                      std::size_t(a.private_classes)));
  net.add(std::make_unique<nn::Softmax>());
  return net;
}

// Dependence discriminator over concat[y_t, y_s]; output clamped away from
// {0,1} because downstream losses take log-odds.
inline nn::Sequential make_codeword_discriminator(const ArchSpec& a) {
  a.validate();
  nn::Sequential net;
  net.add(std::make_unique<nn::Dense>(a.total_code(), a.discriminator_hidden));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Dense>(a.discriminator_hidden, 1));
  net.add(std::make_unique<nn::Sigmoid>(1e-6));
  return net;
}

// Generic softmax MLP, used for the eavesdropper, monitoring probes, and
// the reconstruction digit judge's head.
inline nn::Sequential make_mlp_classifier(std::size_t in_dim, int classes,
                                          std::size_t hidden) {
  nn::Sequential net;
  net.add(std::make_unique<nn::Dense>(in_dim, hidden));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Dense>(hidden, std::size_t(classes)));
  net.add(std::make_unique<nn::Softmax>());
  return net;
}

// Single affine layer + softmax: the probe family for disentanglement
// measurements.
inline nn::Sequential make_linear_probe(std::size_t in_dim, int classes) {
  nn::Sequential net;
  net.add(std::make_unique<nn::Dense>(in_dim, std::size_t(classes)));
  net.add(std::make_unique<nn::Softmax>());
  return net;
}

// Small conv net over a single-channel (luminance) image, for judging
// whether reconstructions keep their digit readable.
inline nn::Sequential make_luminance_digit_classifier(std::size_t height,
                                                      std::size_t width) {
  if (height % 4 != 0 || width % 4 != 0) {
    throw config_error("digit classifier: image sides must be multiples of 4");
  }
  nn::Sequential net;
  net.add(std::make_unique<nn::Conv2d>(1, 16, 3, 2, 1));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Conv2d>(16, 32, 3, 2, 1));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Flatten>());
  net.add(std::make_unique<nn::Dense>(32 * (height / 4) * (width / 4), 10));
  net.add(std::make_unique<nn::Softmax>());
  return net;
}

// ---------------------------------------------------------------------------
// Bundles

// The five trainable maps of one privacy-aware run plus provenance.
struct ModelBundle {
  ArchSpec arch;
  nn::Sequential phi_t;    // public encoder: image -> R^{m_t}
  nn::Sequential phi_s;    // private encoder: image -> R^{m_s}
  nn::Sequential theta_b;  // decoder: R^{m_t+m_s} -> image
  nn::Sequential gamma;    // private classifier: R^{m_s} -> simplex
  nn::Sequential epsilon;  // discriminator: R^{m_t+m_s} -> (0,1)
  std::string stage = "init";
  std::string config_hash;

  static ModelBundle create(const ArchSpec& arch, std::uint64_t seed) {
    arch.validate();
    ModelBundle b;
    b.arch = arch;
    b.phi_t = make_public_encoder(arch);
    b.phi_s = make_private_encoder(arch);
    b.theta_b = detail::decoder_from_width(arch, arch.total_code());
    b.gamma = make_private_classifier(arch);
    b.epsilon = make_codeword_discriminator(arch);
    Rng r_t(derive_seed(seed, "init-phi-t"));
    Rng r_s(derive_seed(seed, "init-phi-s"));
    Rng r_b(derive_seed(seed, "init-theta-b"));
    Rng r_g(derive_seed(seed, "init-gamma"));
    Rng r_e(derive_seed(seed, "init-epsilon"));
    b.phi_t.init(r_t);
    b.phi_s.init(r_s);
    b.theta_b.init(r_b);
    b.gamma.init(r_g);
    b.epsilon.init(r_e);
    return b;
  }

  void check_image_batch(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != arch.image_channels ||
        x.dim(2) != arch.image_height || x.dim(3) != arch.image_width) {
      throw input_error("model: expected image batch {N," +
                        std::to_string(arch.image_channels) + "," +
                        std::to_string(arch.image_height) + "," +
                        std::to_string(arch.image_width) + "}, got " +
                        x.shape_string());
    }
  }

  Tensor public_encode(const Tensor& x, bool train = false) {
    check_image_batch(x);
    return phi_t.forward(x, train);
  }

  Tensor private_encode(const Tensor& x, bool train = false) {
    check_image_batch(x);
    return phi_s.forward(x, train);
  }

  Tensor decode(const Tensor& y_hat, bool train = false) {
    if (y_hat.rank() != 2 || y_hat.dim(1) != arch.total_code()) {
      throw input_error("decode: expected {N," +
                        std::to_string(arch.total_code()) + "}, got " +
                        y_hat.shape_string());
    }
    return theta_b.forward(y_hat, train);
  }

  Tensor classify_private(const Tensor& y_s, bool train = false) {
    if (y_s.rank() != 2 || y_s.dim(1) != arch.m_s) {
      throw input_error("classify_private: expected {N," +
                        std::to_string(arch.m_s) + "}, got " +
                        y_s.shape_string());
    }
    return gamma.forward(y_s, train);
  }

  Tensor discriminate(const Tensor& y_t, const Tensor& y_s,
                      bool train = false) {
    if (y_t.rank() != 2 || y_t.dim(1) != arch.m_t || y_s.rank() != 2 ||
        y_s.dim(1) != arch.m_s || y_t.dim(0) != y_s.dim(0)) {
      throw input_error("discriminate: expected {N," +
                        std::to_string(arch.m_t) + "} and {N," +
                        std::to_string(arch.m_s) + "}, got " +
                        y_t.shape_string() + " and " + y_s.shape_string());
    }
    return epsilon.forward(hconcat(y_t, y_s), train);
  }
};

// Plain autoencoder with an internal adversary, trained against one assumed
// eavesdropper SNR. The codeword is a single undivided vector of the same
// total width as the split design.
struct BaselineBundle {
  ArchSpec arch;
  nn::Sequential encoder;    // image -> R^{m_t+m_s}
  nn::Sequential decoder;    // R^{m_t+m_s} -> image
  nn::Sequential adversary;  // R^{m_t+m_s} -> simplex over private classes
  double snr_ae_train_db = 0.0;
  double lambda = 0.0;
  std::string stage = "init";
  std::string config_hash;

  static BaselineBundle create(const ArchSpec& arch, double snr_ae_train_db,
                               double lambda, std::uint64_t seed) {
    arch.validate();
    BaselineBundle b;
    b.arch = arch;
    b.snr_ae_train_db = snr_ae_train_db;
    b.lambda = lambda;
    // Re-uses the public-encoder trunk with the full codeword width.
    ArchSpec wide = arch;
    wide.m_t = arch.total_code();
    b.encoder = make_public_encoder(wide);
    b.decoder = detail::decoder_from_width(arch, arch.total_code());
    b.adversary = make_mlp_classifier(arch.total_code(),
                                      arch.private_classes,
                                      arch.classifier_hidden);
    Rng r_e(derive_seed(seed, "baseline-encoder"));
    Rng r_d(derive_seed(seed, "baseline-decoder"));
    Rng r_a(derive_seed(seed, "baseline-adversary"));
    b.encoder.init(r_e);
    b.decoder.init(r_d);
    b.adversary.init(r_a);
    return b;
  }

  Tensor encode(const Tensor& x, bool train = false) {
    return encoder.forward(x, train);
  }
  Tensor decode(const Tensor& y_hat, bool train = false) {
    return decoder.forward(y_hat, train);
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: magic, u32 header length, JSON header (descriptors + named
// parameter table), raw double payload. Self-describing and versioned.

namespace detail {

constexpr char kCheckpointMagic[8] = {'D', 'I', 'B', 'C', 'K', 'P', 'T', '1'};

struct NamedNet {
  const char* name;
  nn::Sequential* net;
};

inline void save_checkpoint_impl(const std::filesystem::path& path,
                                 const std::vector<NamedNet>& nets,
                                 nlohmann::json meta) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["tool_version"] = kVersion;
  header["meta"] = std::move(meta);

  std::vector<double> payload;
  for (const auto& [name, net] : nets) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["descriptor"] = net->descriptor();
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : net->parameters()) {
      params.push_back({{"name", p.name},
                        {"shape", p.value->shape()},
                        {"offset", payload.size()},
                        {"count", p.value->size()}});
      payload.insert(payload.end(), p.value->data(),
                     p.value->data() + p.value->size());
    }
    entry["params"] = std::move(params);
    header["models"].push_back(std::move(entry));
  }
  header["total_values"] = payload.size();

  std::string hs = header.dump();
  std::vector<std::uint8_t> buf;
  buf.reserve(12 + hs.size() + payload.size() * sizeof(double));
  buf.insert(buf.end(), kCheckpointMagic, kCheckpointMagic + 8);
  append_u32(buf, std::uint32_t(hs.size()));
  buf.insert(buf.end(), hs.begin(), hs.end());
  const auto* raw = reinterpret_cast<const std::uint8_t*>(payload.data());
  buf.insert(buf.end(), raw, raw + payload.size() * sizeof(double));
  write_binary_file(path, buf.data(), buf.size());
}

struct LoadedCheckpoint {
  nlohmann::json header;
  std::vector<double> payload;
};

inline LoadedCheckpoint read_checkpoint_file(
    const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf = read_binary_file(path);
  if (buf.size() < 12 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0) {
    throw io_error("checkpoint: bad magic in " + path.string());
  }
  std::uint32_t hlen = read_u32(buf.data() + 8);
  if (buf.size() < 12 + hlen) {
    throw io_error("checkpoint: truncated header in " + path.string());
  }
  LoadedCheckpoint out;
  try {
    out.header =
        nlohmann::json::parse(buf.begin() + 12, buf.begin() + 12 + hlen);
  } catch (const nlohmann::json::parse_error& e) {
    throw io_error("checkpoint: malformed header in " + path.string() + ": " +
                   e.what());
  }
  if (out.header.value("format_version", -1) != kFormatVersion) {
    throw io_error("checkpoint: unsupported format version in " +
                   path.string());
  }
  std::size_t total = out.header.at("total_values").get<std::size_t>();
  if (buf.size() != 12 + hlen + total * sizeof(double)) {
    throw io_error("checkpoint: payload size mismatch in " + path.string());
  }
  out.payload.resize(total);
  std::memcpy(out.payload.data(), buf.data() + 12 + hlen,
              total * sizeof(double));
  return out;
}

// Rebuilds one network from its header entry and fills its parameters.
inline nn::Sequential restore_net(const nlohmann::json& entry,
                                  const std::vector<double>& payload,
                                  const std::string& origin) {
  nn::Sequential net = nn::Sequential::from_descriptor(entry.at("descriptor"));
  auto params = net.parameters();
  const auto& table = entry.at("params");
  if (table.size() != params.size()) {
    throw io_error("checkpoint: parameter table mismatch for " +
                   entry.at("name").get<std::string>() + " in " + origin);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& rec = table[i];
    if (rec.at("name").get<std::string>() != params[i].name ||
        rec.at("shape").get<std::vector<std::size_t>>() !=
            params[i].value->shape()) {
      throw io_error("checkpoint: descriptor/parameter mismatch at " +
                     params[i].name + " in " + origin);
    }
    std::size_t offset = rec.at("offset").get<std::size_t>();
    std::size_t count = rec.at("count").get<std::size_t>();
    if (count != params[i].value->size() ||
        offset + count > payload.size()) {
      throw io_error("checkpoint: payload range invalid at " +
                     params[i].name + " in " + origin);
    }
    std::memcpy(params[i].value->data(), payload.data() + offset,
                count * sizeof(double));
  }
  return net;
}

inline const nlohmann::json& find_model(const nlohmann::json& header,
                                        const std::string& name,
                                        const std::string& origin) {
  for (const auto& entry : header.at("models")) {
    if (entry.at("name").get<std::string>() == name) return entry;
  }
  throw io_error("checkpoint: missing model '" + name + "' in " + origin);
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path,
                            ModelBundle& bundle) {
  nlohmann::json meta;
  meta["kind"] = "dib";
  meta["stage"] = bundle.stage;
  meta["config_hash"] = bundle.config_hash;
  meta["arch"] = bundle.arch.to_json();
  detail::save_checkpoint_impl(path,
                               {{"phi_t", &bundle.phi_t},
                                {"phi_s", &bundle.phi_s},
                                {"theta_b", &bundle.theta_b},
                                {"gamma", &bundle.gamma},
                                {"epsilon", &bundle.epsilon}},
                               std::move(meta));
}

inline ModelBundle load_checkpoint(const std::filesystem::path& path) {
  auto file = detail::read_checkpoint_file(path);
  const auto& meta = file.header.at("meta");
  if (meta.value("kind", "") != "dib") {
    throw io_error("checkpoint: expected a dib bundle in " + path.string());
  }
  ModelBundle b;
  b.arch = ArchSpec::from_json(meta.at("arch"));
  b.stage = meta.at("stage").get<std::string>();
  b.config_hash = meta.value("config_hash", "");
  std::string origin = path.string();
  b.phi_t = detail::restore_net(detail::find_model(file.header, "phi_t", origin),
                                file.payload, origin);
  b.phi_s = detail::restore_net(detail::find_model(file.header, "phi_s", origin),
                                file.payload, origin);
  b.theta_b = detail::restore_net(
      detail::find_model(file.header, "theta_b", origin), file.payload, origin);
  b.gamma = detail::restore_net(detail::find_model(file.header, "gamma", origin),
                                file.payload, origin);
  b.epsilon = detail::restore_net(
      detail::find_model(file.header, "epsilon", origin), file.payload, origin);
  return b;
}

// Overload that also enforces an expected architecture.
inline ModelBundle load_checkpoint(const std::filesystem::path& path,
                                   const ArchSpec& expected) {
  ModelBundle b = load_checkpoint(path);
  if (!(b.arch == expected)) {
    throw precondition_error("checkpoint: architecture mismatch in " +
                             path.string());
  }
  return b;
}

inline void save_baseline_checkpoint(const std::filesystem::path& path,
                                     BaselineBundle& bundle) {
  nlohmann::json meta;
  meta["kind"] = "adversarial_baseline";
  meta["stage"] = bundle.stage;
  meta["config_hash"] = bundle.config_hash;
  meta["arch"] = bundle.arch.to_json();
  meta["snr_ae_train_db"] = bundle.snr_ae_train_db;
  meta["lambda"] = bundle.lambda;
  detail::save_checkpoint_impl(path,
                               {{"encoder", &bundle.encoder},
                                {"decoder", &bundle.decoder},
                                {"adversary", &bundle.adversary}},
                               std::move(meta));
}

inline BaselineBundle load_baseline_checkpoint(
    const std::filesystem::path& path) {
  auto file = detail::read_checkpoint_file(path);
  const auto& meta = file.header.at("meta");
  if (meta.value("kind", "") != "adversarial_baseline") {
    throw io_error("checkpoint: expected a baseline bundle in " +
                   path.string());
  }
  BaselineBundle b;
  b.arch = ArchSpec::from_json(meta.at("arch"));
  b.stage = meta.at("stage").get<std::string>();
  b.config_hash = meta.value("config_hash", "");
  b.snr_ae_train_db = meta.at("snr_ae_train_db").get<double>();
  b.lambda = meta.at("lambda").get<double>();
  std::string origin = path.string();
  b.encoder = detail::restore_net(
      detail::find_model(file.header, "encoder", origin), file.payload, origin);
  b.decoder = detail::restore_net(
      detail::find_model(file.header, "decoder", origin), file.payload, origin);
  b.adversary = detail::restore_net(
      detail::find_model(file.header, "adversary", origin), file.payload,
      origin);
  return b;
}

}  // namespace dibjscc
