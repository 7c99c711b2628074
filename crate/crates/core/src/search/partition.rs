//! Set partitions of small bitmasks.

/// All partitions of `mask` into at least two nonempty blocks, each listed
/// with blocks ordered by their lowest element. The order is deterministic.
pub fn proper_partitions(mask: u16) -> Vec<Vec<u16>> {
    let elems: Vec<u16> = (0..16).filter(|b| mask & (1 << b) != 0).collect();
    let mut out = Vec::new();
    let mut blocks: Vec<u16> = Vec::new();
    grow(&elems, 0, &mut blocks, &mut out);
    out.retain(|p| p.len() >= 2);
    out
}

// restricted growth: element k joins an existing block or opens a new one
fn grow(elems: &[u16], k: usize, blocks: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
    if k == elems.len() {
        out.push(blocks.clone());
        return;
    }
    let bit = 1u16 << elems[k];
    for b in 0..blocks.len() {
        blocks[b] |= bit;
        grow(elems, k + 1, blocks, out);
        blocks[b] &= !bit;
    }
    blocks.push(bit);
    grow(elems, k + 1, blocks, out);
    blocks.pop();
}
