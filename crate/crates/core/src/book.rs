// Every chapter of the guide is attached to an empty module so rustdoc runs
// its code blocks as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/problem-files.md")]
mod problem_files {}
#[doc = include_str!("../../../book/src/expressions.md")]
mod expressions {}
#[doc = include_str!("../../../book/src/lower-level.md")]
mod lower_level {}
#[doc = include_str!("../../../book/src/sensitivity.md")]
mod sensitivity {}
#[doc = include_str!("../../../book/src/optimality.md")]
mod optimality {}
#[doc = include_str!("../../../book/src/alm.md")]
mod alm {}
#[doc = include_str!("../../../book/src/grid.md")]
mod grid {}
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
