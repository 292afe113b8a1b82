// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file config.hpp
 * @brief JSON model and training configuration files.
 *
 * Model config fields: name, version, alpha, classes, input_size.
 * Train config fields: base_lr, momentum, decay_factor, decay_epochs,
 * total_epochs, batch_size, dropout_p, seed, augment. Missing train fields
 * keep their defaults.
 */

#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "channelkit/model.hpp"
#include "channelkit/train.hpp"

namespace channelkit {

struct ModelConfig {
    std::string name;
    std::string version = "v1";
    double alpha = 1.0;
    int64_t classes = 1000;
    int64_t input_size = 224;
};

inline ModelConfig load_model_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("model config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("model config: '" + path + "' is not valid JSON: " + e.what());
    }
    ModelConfig cfg;
    cfg.version = j.at("version").get<std::string>();
    cfg.name = j.value("name", "channelnet-" + cfg.version);
    cfg.alpha = j.value("alpha", 1.0);
    cfg.classes = j.value("classes", 1000);
    cfg.input_size = j.value("input_size", 224);
    return cfg;
}

inline void save_model_config(const std::string& path, const ModelConfig& cfg) {
    nlohmann::json j{{"name", cfg.name},
                     {"version", cfg.version},
                     {"alpha", cfg.alpha},
                     {"classes", cfg.classes},
                     {"input_size", cfg.input_size}};
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("model config: cannot write '" + path + "'");
    os << j.dump(2) << "\n";
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("train config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("train config: '" + path + "' is not valid JSON: " + e.what());
    }
    TrainConfig cfg;
    cfg.base_lr = j.value("base_lr", cfg.base_lr);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.decay_factor = j.value("decay_factor", cfg.decay_factor);
    if (j.contains("decay_epochs")) cfg.decay_epochs = j["decay_epochs"].get<std::vector<int>>();
    cfg.total_epochs = j.value("total_epochs", cfg.total_epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.dropout_p = j.value("dropout_p", cfg.dropout_p);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.augment = j.value("augment", cfg.augment);
    cfg.validate();
    return cfg;
}

}  // namespace channelkit
