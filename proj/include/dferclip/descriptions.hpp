#pragma once

#include <string>
#include <vector>

#include "dferclip/errors.hpp"
#include "dferclip/tokenizer.hpp"

namespace dfer {

/// A facial expression class with its ordered facial-behaviour descriptor
/// phrases. "top-k" always means a prefix of the stored order.
struct ClassDescription {
    std::string class_name;
    std::vector<std::string> descriptors;
    int k_used = 0;
};

/// Ordered mapping of expression class names to descriptor lists.
class DescriptionSet {
public:
    static DescriptionSet builtin();
    static DescriptionSet load_json(const std::string& path);
    void save_json(const std::string& path) const;

    void add(std::string class_name, std::vector<std::string> descriptors);
    bool has(const std::string& class_name) const;
    const std::vector<std::string>& descriptors(const std::string& class_name) const;
    ClassDescription description(const std::string& class_name, int k) const;
    const std::vector<std::string>& class_names() const { return order_; }

private:
    std::vector<std::string> order_;
    std::vector<std::vector<std::string>> lists_;
};

/// First k descriptors joined with ", ", the final pair with ", and ", plus a
/// closing period. k = 1 returns the first descriptor verbatim.
std::string build_description(const ClassDescription& cd, int k);

/// Alternative description for prompt ensembling: member m uses the
/// descriptor list rotated left by m before the top-k join, so member 0 is
/// the canonical description.
std::string ensemble_description(const ClassDescription& cd, int k, int member);

/// The seven basic expressions, in their conventional listing order.
const std::vector<std::string>& seven_basic_expressions();

/// First `count` default class names: the seven basic expressions, extended
/// with the four additional single-expression categories up to eleven.
std::vector<std::string> default_class_names(int count);

/// Vocabulary over every descriptor phrase and class name in the set.
Vocabulary build_vocabulary(const DescriptionSet& set);

}  // namespace dfer
