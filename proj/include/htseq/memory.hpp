// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace htseq {

/// Keeps freed heap memory in the process instead of handing large blocks
/// back to the kernel. Training allocates and frees the same multi-megabyte
/// activation buffers every step, and without this most of the contrastive
/// pretraining time goes to page faults. No-op outside glibc.
void keep_freed_memory();

}  // namespace htseq
