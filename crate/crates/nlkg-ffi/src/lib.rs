//! C ABI surface for the nlkg numerical laboratory (under construction).

// Entry points are added as the corresponding core modules land.
