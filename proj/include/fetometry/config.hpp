/**
 * @file config.hpp
 * @brief Pipeline configuration with JSON overlay and echo
 */
#pragma once

#include "fetometry/error.hpp"
#include "fetometry/planes.hpp"

#include <json.hpp>

#include <string>

namespace fetometry {

struct PipelineConfig {
    double gate_threshold = kDefaultGateThreshold;
    double mask_threshold = 0.6;
    double rdp_eps_rel = 0.01;
    double rdp_eps_max_px = 0.5;
    CompositeWeights weights;
    double dice_eps = 1e-6;
    unsigned threads = 1;  ///< never echoed; output does not depend on it

    void validate() const {
        if (!(gate_threshold > 0.0 && gate_threshold < 1.0)) throw Error(ErrorCode::BadConfig, "gate_threshold must lie in (0,1)");
        if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) throw Error(ErrorCode::BadConfig, "mask_threshold must lie in (0,1)");
        if (!(rdp_eps_rel >= 0.0 && rdp_eps_rel < 1.0)) throw Error(ErrorCode::BadConfig, "rdp_eps_rel must lie in [0,1)");
        if (!(rdp_eps_max_px >= 0.0)) throw Error(ErrorCode::BadConfig, "rdp_eps_max_px must be non-negative");
        if (!(dice_eps > 0.0)) throw Error(ErrorCode::BadConfig, "dice_eps must be positive");
        if (threads == 0) throw Error(ErrorCode::BadConfig, "threads must be at least 1");
        weights.validate();
    }

    [[nodiscard]] SelectionConfig selection() const {
        return {gate_threshold, mask_threshold, MeasureParams{rdp_eps_rel, rdp_eps_max_px}, weights, threads};
    }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
    return {
        {"gate_threshold", c.gate_threshold},
        {"mask_threshold", c.mask_threshold},
        {"rdp_eps_rel", c.rdp_eps_rel},
        {"rdp_eps_max_px", c.rdp_eps_max_px},
        {"dice_eps", c.dice_eps},
        {"weights", {{"femur", c.weights.femur}, {"ellipse_parts", c.weights.ellipse_parts}}},
    };
}

/// Overlays keys present in `j` onto `c`; unknown keys are rejected.
inline void apply_json(PipelineConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::BadConfig, "config must be a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "gate_threshold") c.gate_threshold = value.get<double>();
            else if (key == "mask_threshold") c.mask_threshold = value.get<double>();
            else if (key == "rdp_eps_rel") c.rdp_eps_rel = value.get<double>();
            else if (key == "rdp_eps_max_px") c.rdp_eps_max_px = value.get<double>();
            else if (key == "dice_eps") c.dice_eps = value.get<double>();
            else if (key == "threads") c.threads = value.get<unsigned>();
            else if (key == "weights") {
                if (value.contains("femur")) c.weights.femur = value["femur"].get<std::array<double, 2>>();
                if (value.contains("ellipse_parts")) c.weights.ellipse_parts = value["ellipse_parts"].get<std::array<double, 3>>();
            } else {
                throw Error(ErrorCode::BadConfig, "unknown config key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, e.what());
    }
}

}  // namespace fetometry
