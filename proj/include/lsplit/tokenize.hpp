#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lsplit {

struct TokenizeOptions {
  bool lowercase = false;
};

// Treebank-style word tokenization.
//
//  1. Split on whitespace.
//  2. Peel leading  " ' ` ( [ { < $ #  one character at a time.
//  3. Peel trailing " ' ) ] } > , ; : ? ! %  and "..." as one token. A trailing
//     '.' is peeled when the remaining word contains no other '.' ("U.S."
//     survives) or when the chunk is the last one in the text.
//  4. Split contractions off the remaining word: n't, 's, 're, 've, 'll, 'd,
//     'm (case-insensitive), so "don't" -> do n't and "can't" -> ca n't.
std::vector<std::string> tokenize(std::string_view text, const TokenizeOptions& opts = {});

std::string ascii_lower(std::string_view s);

}  // namespace lsplit
