#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bimpm/model.hpp"

namespace bimpm
{

/// A trained model at rest.
///
/// On disk this is a directory holding
///   manifest.txt  `key=value` settings, then one `name RxC f32 byte_offset` line per parameter
///   params.bin    row-major little-endian 32-bit floats, concatenated in manifest order
///   vocab.txt     pretrained words, OOV words and characters in table-row order
///
/// Writing is deterministic, so load followed by save reproduces every file byte for byte.
struct Checkpoint
{
    struct Blob
    {
        std::string name;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        std::vector<float> data;
    };

    /// Ordered settings: the model configuration, training hyperparameters, dev metric and any
    /// run metadata the caller appends.
    std::vector<std::pair<std::string, std::string>> settings;
    Vocabulary vocab;
    std::vector<Blob> params;

    std::optional<std::string> get(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    ModelConfig model_config() const;
    Precision precision() const;
    /// Dev metric stored at save time.
    double metric() const;
    std::string metric_name() const;
};

inline constexpr int kCheckpointVersion = 1;

/// Round-trippable text form of a real number.
std::string format_real(double v);

/// Settings describing a model configuration, in a fixed key order.
std::vector<std::pair<std::string, std::string>> model_settings(const ModelConfig& config);

/// Snapshot of a model's parameters (rounded to 32-bit) and configuration.
template <typename Scalar>
Checkpoint make_checkpoint(const Model<Scalar>& model, Precision precision);

/// Copies the checkpoint's parameter blobs into an existing model of matching layout.
template <typename Scalar>
void load_params(Model<Scalar>& model, const Checkpoint& checkpoint);

template <typename Scalar>
std::unique_ptr<Model<Scalar>> model_from_checkpoint(const Checkpoint& checkpoint);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace bimpm
