#include "baforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "baforge/errors.hpp"
#include "baforge/ppm.hpp"
#include "baforge/rng.hpp"

namespace baforge {

namespace fs = std::filesystem;

void DatasetSpec::validate() const {
  if (n_identities < 1 || samples_per_identity < 1) {
    throw ValidationError("dataset spec: need at least one identity and one sample");
  }
  if (height < 8 || width < 8 || channels != 3) {
    throw ValidationError("dataset spec: images must be at least 8x8 with 3 channels");
  }
  if (max_shift < 0.0 || noise_sigma < 0.0) {
    throw ValidationError("dataset spec: variation parameters must be >= 0");
  }
  if (!(jitter_lo >= 0.0 && jitter_lo <= jitter_hi)) {
    throw ValidationError("dataset spec: need 0 <= jitter_lo <= jitter_hi");
  }
}

namespace {

constexpr int kGratings = 6;
constexpr int kTemplateBlobs = 5;
constexpr int kGridRows = 4;
constexpr int kGridCols = 4;
constexpr int kBlobs = kGridRows * kGridCols;

// Base pattern of one identity, evaluated as a continuous function so that
// sample shifts are sub-pixel.
struct IdentityPattern {
  int n_gratings, n_blobs;
  float base[3];
  float g_fy[kGratings], g_fx[kGratings], g_phase[kGratings], g_amp[kGratings];
  float g_w[kGratings][3];
  float b_cy[kBlobs], b_cx[kBlobs], b_r[kBlobs];
  float b_amp[kBlobs][3];
};

// Every dataset shares one strong "face template" (drawn once per dataset
// seed) of full-frame gratings and blobs; identities are deviations layered
// on top. This mirrors how real faces share most of their content: impostor
// similarities end up high and concentrated rather than scattered, which is
// what makes verification thresholds meaningful for a toy setting.
//
// The identity deviation is a fixed grid of Gaussian bumps in the upper-center
// of the frame — the same "facial parts" in the same places for everyone, with
// identity carried by each bump's per-channel signed amplitude (a random code).
// Fixed positions keep identity evidence local (the way brows/eyes/forehead
// carry most of a face's identity); random signs guarantee that no two
// identities collide the way freely-placed blobs occasionally would.
IdentityPattern draw_pattern(Rng& rng, int height, int width, float amp_scale,
                             bool with_base, bool identity_region) {
  IdentityPattern p;
  for (int c = 0; c < 3; ++c) {
    p.base[c] = with_base ? static_cast<float>(rng.uniform(0.40, 0.60)) : 0.0f;
  }
  p.n_gratings = identity_region ? 0 : kGratings;
  for (int k = 0; k < p.n_gratings; ++k) {
    p.g_fy[k] = static_cast<float>(rng.uniform(-6.0, 6.0));
    p.g_fx[k] = static_cast<float>(rng.uniform(-6.0, 6.0));
    p.g_phase[k] = static_cast<float>(rng.uniform(0.0, 2.0 * 3.14159265358979323846));
    p.g_amp[k] = amp_scale * static_cast<float>(rng.uniform(0.10, 0.14));
    for (int c = 0; c < 3; ++c) p.g_w[k][c] = static_cast<float>(rng.uniform(0.0, 1.0));
  }
  p.n_blobs = identity_region ? kBlobs : kTemplateBlobs;
  const float row0 = 0.07f * height, row1 = 0.31f * height;
  const float col0 = 0.35f * width, col1 = 0.65f * width;
  const float cell_h = (row1 - row0) / kGridRows;
  const float cell_w = (col1 - col0) / kGridCols;
  for (int k = 0; k < p.n_blobs; ++k) {
    if (identity_region) {
      // Grid anchor plus a per-identity jitter of up to half a cell: bump
      // placement carries identity alongside the signed amplitudes, and the
      // wide radius keeps genuine per-sample shifts from scrambling the code.
      p.b_cy[k] = row0 + (static_cast<float>(k / kGridCols) + 0.5f +
                          static_cast<float>(rng.uniform(-0.5, 0.5))) * cell_h;
      p.b_cx[k] = col0 + (static_cast<float>(k % kGridCols) + 0.5f +
                          static_cast<float>(rng.uniform(-0.5, 0.5))) * cell_w;
      p.b_r[k] = static_cast<float>(rng.uniform(1.1, 1.4)) * std::min(cell_h, cell_w);
    } else {
      p.b_cy[k] = static_cast<float>(rng.uniform(0.0, height));
      p.b_cx[k] = static_cast<float>(rng.uniform(0.0, width));
      p.b_r[k] = static_cast<float>(rng.uniform(height / 8.0, height / 4.0));
    }
    for (int c = 0; c < 3; ++c) {
      const float mag = amp_scale * static_cast<float>(rng.uniform(0.20, 0.30));
      p.b_amp[k][c] = rng.bernoulli(0.5) ? mag : -mag;
    }
  }
  return p;
}

float pattern_value(const IdentityPattern& p, float u, float v, int c, int height, int width) {
  float val = p.base[c];
  for (int k = 0; k < p.n_gratings; ++k) {
    const float arg = 2.0f * 3.14159265f * (p.g_fy[k] * u / height + p.g_fx[k] * v / width) +
                      p.g_phase[k];
    val += p.g_amp[k] * p.g_w[k][c] * std::sin(arg);
  }
  for (int k = 0; k < p.n_blobs; ++k) {
    const float dy = u - p.b_cy[k];
    const float dx = v - p.b_cx[k];
    val += p.b_amp[k][c] * std::exp(-(dy * dy + dx * dx) / (2.0f * p.b_r[k] * p.b_r[k]));
  }
  return val;
}

}  // namespace

LabeledDataset generate_dataset(const DatasetSpec& spec, uint64_t seed) {
  spec.validate();
  LabeledDataset ds;
  ds.n_identities = spec.n_identities;
  ds.samples_per_identity = spec.samples_per_identity;
  ds.items.reserve(static_cast<size_t>(spec.n_identities) * spec.samples_per_identity);
  Rng template_rng(derive_seed(seed, "dataset-template"));
  const IdentityPattern shared =
      draw_pattern(template_rng, spec.height, spec.width, 1.4f, true, false);
  for (int id = 0; id < spec.n_identities; ++id) {
    Rng id_rng(derive_seed(seed, "dataset-identity", static_cast<uint64_t>(id)));
    const IdentityPattern pattern =
        draw_pattern(id_rng, spec.height, spec.width, 1.0f, false, true);
    for (int k = 0; k < spec.samples_per_identity; ++k) {
      Rng s_rng(derive_seed(seed, "dataset-sample", static_cast<uint64_t>(id),
                            static_cast<uint64_t>(k)));
      const float dy = static_cast<float>(s_rng.uniform(-spec.max_shift, spec.max_shift));
      const float dx = static_cast<float>(s_rng.uniform(-spec.max_shift, spec.max_shift));
      const float jitter = static_cast<float>(s_rng.uniform(spec.jitter_lo, spec.jitter_hi));
      LabeledImage item;
      item.label = id;
      item.index = k;
      item.image = ImageTensor(spec.height, spec.width, spec.channels);
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          for (int c = 0; c < spec.channels; ++c) {
            float v = pattern_value(shared, y + dy, x + dx, c, spec.height, spec.width) +
                      pattern_value(pattern, y + dy, x + dx, c, spec.height, spec.width);
            v *= jitter;
            if (spec.noise_sigma > 0.0) {
              v += static_cast<float>(s_rng.gaussian(0.0, spec.noise_sigma));
            }
            item.image.at(y, x, c) = std::clamp(v, 0.0f, 1.0f);
          }
        }
      }
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

LabeledDataset filter_identities(const LabeledDataset& ds, int lo_label, int hi_label) {
  LabeledDataset out;
  out.samples_per_identity = ds.samples_per_identity;
  for (const LabeledImage& item : ds.items) {
    if (item.label >= lo_label && item.label < hi_label) out.items.push_back(item);
  }
  std::map<int, int> distinct;
  for (const LabeledImage& item : out.items) distinct[item.label] = 1;
  out.n_identities = static_cast<int>(distinct.size());
  return out;
}

void export_dataset_ppm(const LabeledDataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir + ": " + ec.message());
  const std::string labels_path = (fs::path(dir) / "labels.csv").string();
  std::ofstream labels(labels_path);
  if (!labels) throw IoError("cannot open " + labels_path + " for writing");
  labels << "filename,label,index\n";
  char name[64];
  for (const LabeledImage& item : ds.items) {
    std::snprintf(name, sizeof(name), "id%03d_%03d.ppm", item.label, item.index);
    write_ppm((fs::path(dir) / name).string(), item.image);
    labels << name << "," << item.label << "," << item.index << "\n";
  }
  if (!labels) throw IoError("short write to " + labels_path);
}

LabeledDataset load_dataset_ppm(const std::string& dir) {
  const std::string labels_path = (fs::path(dir) / "labels.csv").string();
  std::ifstream labels(labels_path);
  if (!labels) throw IoError("cannot open " + labels_path + " (not a dataset directory?)");
  std::string line;
  if (!std::getline(labels, line) || line != "filename,label,index") {
    throw FormatError(labels_path + ": missing labels.csv header");
  }
  LabeledDataset ds;
  std::map<int, int> per_identity;
  int line_no = 1;
  while (std::getline(labels, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string fname, label_s, index_s;
    if (!std::getline(ss, fname, ',') || !std::getline(ss, label_s, ',') ||
        !std::getline(ss, index_s)) {
      throw FormatError(labels_path + ": malformed row at line " + std::to_string(line_no));
    }
    LabeledImage item;
    try {
      item.label = std::stoi(label_s);
      item.index = std::stoi(index_s);
    } catch (const std::exception&) {
      throw FormatError(labels_path + ": non-numeric label at line " + std::to_string(line_no));
    }
    item.image = read_ppm((fs::path(dir) / fname).string());
    per_identity[item.label] += 1;
    ds.items.push_back(std::move(item));
  }
  ds.n_identities = static_cast<int>(per_identity.size());
  ds.samples_per_identity = per_identity.empty() ? 0 : per_identity.begin()->second;
  return ds;
}

}  // namespace baforge
