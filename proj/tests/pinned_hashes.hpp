#pragma once

// sha256 of the bundled prompt and taxonomy files. Any edit to those files
// must be deliberate: update the hash here in the same change.

#include <map>
#include <string>

inline const std::map<std::string, std::string> kPinnedDataHashes{
    {"prompts/edit/adversarial.txt",
     "72c55662cbd675a933cf6645eee71e93c95cb6cd4b266bc72a94f2edde129a91"},
    {"prompts/edit/constrained.txt",
     "94363e80496a1e5a33cbf3303afb94291fa2eddbb6be1f01aee25525b71c8732"},
    {"prompts/edit/default.txt",
     "ebba10efd2e3763b3d86ec2e09d3b5d4dbb377a36f02f13e8d9be139398f36c0"},
    {"prompts/edit/output_format.txt",
     "b98c834f0a1bf055adb053d132af5e6c9201c25127e51b9ef2f3b66f32967665"},
    {"prompts/judge/output_format.txt",
     "ed35f8576e090f69d4a42b00b01bd20c2ac6d140d6d8ca8029cc3ab4e15e9883"},
    {"prompts/judge/recall.txt",
     "02c4420199fc18785d55d29a49ec038eff8860230617d4704d0231766bddbfc9"},
    {"prompts/review/acl.txt",
     "bf3d3c321433c2238711f7189409bf19dec23a93d248c36865be652ed833a9f2"},
    {"prompts/review/acl_senior.txt",
     "d47e674b1d825cdb0020c2ed4ad416c081e7046f3ef002a7ab8cc0fba4f99e98"},
    {"prompts/review/ai_generated.txt",
     "b1cec4a968e6f11d37994d9d8531ebebb6c19c29f45ada37af773fbc50eea06f"},
    {"prompts/review/default.txt",
     "5b7aca982bde5d4c811cda7339350d08cce26acb7a7fdcc44231266fcb399a80"},
    {"prompts/review/output_format.txt",
     "c176e1a4853c9e1f02b36bcba2bda29b007adf5129b3bbfa8685cb44b8a646f7"},
    {"prompts/review/simple.txt",
     "4d980184cc6a20d7bbf56dce8874f4734a3a3eb3c1885657314c92e116601cd4"},
    {"taxonomy/edit_types.json",
     "fd5177b9e4c05bd67d0f04f178b6db3fd0b92fe6880aab32bb63eeec59d0e795"},
};
