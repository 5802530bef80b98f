#include "dferclip/descriptions.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace dfer {

DescriptionSet DescriptionSet::builtin() {
    // The first four descriptors per class form the published description;
    // two extensions each keep the top-6 variant assembleable.
    DescriptionSet set;
    set.add("happiness", {"a smiling mouth", "raised cheeks", "wrinkled eyes", "arched eyebrows",
                          "crinkled eye corners", "parted lips"});
    set.add("sadness", {"tears", "a downward turned mouth", "drooping upper eyelids",
                        "a wrinkled forehead", "lowered inner eyebrows", "a trembling chin"});
    set.add("neutral", {"relaxed facial muscles", "a straight mouth", "a smooth forehead",
                        "unremarkable eyebrows", "steady eyes", "a level gaze"});
    set.add("anger", {"furrowed eyebrows", "narrow eyes", "tightened lips", "flared nostrils",
                      "a clenched jaw", "a hardened stare"});
    set.add("surprise", {"widened eyes", "an open mouth", "raised eyebrows", "a frozen expression",
                         "a dropped jaw", "horizontal forehead wrinkles"});
    set.add("disgust", {"a wrinkled nose", "lowered eyebrows", "a tightened mouth", "narrow eyes",
                        "a raised upper lip", "a backward head tilt"});
    set.add("fear", {"raised eyebrows", "parted lips", "a furrowed brow", "a retracted chin",
                     "widened tense eyes", "stretched lips"});
    set.add("contempt", {"one side of its mouth raised", "one eyebrow lower and one raised",
                         "narrowed eyes", "a raised chin", "a sideways glance",
                         "tightened mouth corners"});
    set.add("anxiety", {"a tensed forehead", "tightly pressed lips", "pupil dilation",
                        "tensed facial muscles", "darting eyes", "a rigid jaw"});
    set.add("helplessness", {"drooping eyebrows", "a downward gaze", "a downturned mouth",
                             "lacking expression", "slack facial muscles", "heavy eyelids"});
    set.add("disappointment", {"a downturned mouth", "lowered eyebrows", "narrowed eyes",
                               "a sighing face", "averted eyes", "a slight head drop"});
    return set;
}

DescriptionSet DescriptionSet::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("descriptions: cannot open " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("descriptions: malformed JSON in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw DataError("descriptions: " + path + " is not a JSON object");
    DescriptionSet set;
    for (auto& [name, list] : j.items()) {
        if (!list.is_array() || list.empty()) {
            throw DataError("descriptions: class '" + name + "' in " + path +
                            " has no descriptor list");
        }
        std::vector<std::string> descriptors;
        for (auto& d : list) descriptors.push_back(d.get<std::string>());
        set.add(name, std::move(descriptors));
    }
    return set;
}

void DescriptionSet::save_json(const std::string& path) const {
    nlohmann::ordered_json j;
    for (size_t i = 0; i < order_.size(); ++i) j[order_[i]] = lists_[i];
    std::ofstream out(path);
    if (!out) throw IoError("descriptions: cannot write " + path);
    out << j.dump(2) << "\n";
}

void DescriptionSet::add(std::string class_name, std::vector<std::string> descriptors) {
    if (descriptors.empty()) {
        throw DataError("descriptions: class '" + class_name + "' needs at least one descriptor");
    }
    order_.push_back(std::move(class_name));
    lists_.push_back(std::move(descriptors));
}

bool DescriptionSet::has(const std::string& class_name) const {
    return std::find(order_.begin(), order_.end(), class_name) != order_.end();
}

const std::vector<std::string>& DescriptionSet::descriptors(const std::string& class_name) const {
    auto it = std::find(order_.begin(), order_.end(), class_name);
    if (it == order_.end()) throw DataError("descriptions: unknown class '" + class_name + "'");
    return lists_[static_cast<size_t>(it - order_.begin())];
}

ClassDescription DescriptionSet::description(const std::string& class_name, int k) const {
    ClassDescription cd;
    cd.class_name = class_name;
    cd.descriptors = descriptors(class_name);
    if (k < 1 || k > static_cast<int>(cd.descriptors.size())) {
        throw ConfigError("descriptions: k = " + std::to_string(k) + " out of range [1, " +
                          std::to_string(cd.descriptors.size()) + "] for class '" + class_name +
                          "'");
    }
    cd.k_used = k;
    return cd;
}

std::string build_description(const ClassDescription& cd, int k) {
    if (k < 1 || k > static_cast<int>(cd.descriptors.size())) {
        throw ConfigError("build_description: k = " + std::to_string(k) + " out of range [1, " +
                          std::to_string(cd.descriptors.size()) + "] for class '" + cd.class_name +
                          "'");
    }
    if (k == 1) return cd.descriptors[0];
    std::string out;
    for (int i = 0; i < k; ++i) {
        if (i > 0) out += (i == k - 1) ? ", and " : ", ";
        out += cd.descriptors[static_cast<size_t>(i)];
    }
    out += ".";
    return out;
}

std::string ensemble_description(const ClassDescription& cd, int k, int member) {
    if (member < 0) throw ConfigError("ensemble_description: negative member index");
    const int n = static_cast<int>(cd.descriptors.size());
    ClassDescription rotated = cd;
    for (int i = 0; i < n; ++i) {
        rotated.descriptors[static_cast<size_t>(i)] =
            cd.descriptors[static_cast<size_t>((i + member) % n)];
    }
    return build_description(rotated, k);
}

const std::vector<std::string>& seven_basic_expressions() {
    static const std::vector<std::string> names = {"neutral", "happiness", "sadness", "surprise",
                                                   "fear",    "disgust",   "anger"};
    return names;
}

std::vector<std::string> default_class_names(int count) {
    static const std::vector<std::string> extras = {"contempt", "anxiety", "helplessness",
                                                    "disappointment"};
    if (count < 1 || count > 11) {
        throw ConfigError("default_class_names: count " + std::to_string(count) +
                          " outside [1, 11]");
    }
    std::vector<std::string> names;
    for (int i = 0; i < count && i < 7; ++i) names.push_back(seven_basic_expressions()[i]);
    for (int i = 7; i < count; ++i) names.push_back(extras[static_cast<size_t>(i - 7)]);
    return names;
}

Vocabulary build_vocabulary(const DescriptionSet& set) {
    std::vector<std::string> texts;
    for (const auto& name : set.class_names()) {
        texts.push_back(name);
        for (const auto& d : set.descriptors(name)) texts.push_back(d);
    }
    return Vocabulary::build(texts);
}

}  // namespace dfer
