//! Bilevel programs through the lower-level KKT reformulation.
//!
//! A bilevel program minimizes an upper objective `F(x, y)` subject to upper
//! constraints `H(x, y) = 0`, `G(x, y) <= 0` and the requirement that `y`
//! minimizes a lower problem `min_y f(x, y)` s.t. `h(x, y) = 0`, `g(x, y) <= 0`.
//! When the lower problem satisfies the Jacobian uniqueness conditions (KKT,
//! LICQ, strict complementarity and second-order sufficiency), its KKT map
//! `x -> (y(x), mu(x), xi(x))` is smooth, and the bilevel program can be
//! studied through the single-level program that replaces `y in S(x)` by the
//! lower KKT system in the variables `u = (x, y, mu, xi)`.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: dense LU/QR/eigen kernels, a bounded simplex, finite differences.
//! * [`expr`]: the expression language and exact symbolic derivatives.
//! * [`problem`]: the problem model, the problem-file format and the built-in fixtures.
//! * [`lower`]: lower-level Lagrangian, KKT residual, regularity checker and Newton solver.
//! * [`sensitivity`]: the KKT Jacobian `K(x)` and implicit Jacobians of the solution map.
//! * [`optimality`]: first- and second-order conditions of the KKT reformulation.
//! * [`alm`]: the classical augmented Lagrangian method and its rate diagnostics.
//! * [`grid`]: a brute-force enumerator for one- and two-dimensional problems.
//! * [`verify`]: the invariant suite run by `bilocal verify`.
//!
//! ```
//! use bilocal::problem::fixture;
//! use bilocal::lower::{check_jacobian_uniqueness, Tolerances};
//!
//! let p = fixture("P1").unwrap();
//! let report = check_jacobian_uniqueness(&p, &[0.0], &[1.0], &[], &[1.0], &Tolerances::default()).unwrap();
//! assert!(report.holds());
//! ```

pub mod alm;
pub mod expr;
pub mod grid;
pub mod lower;
pub mod numerics;
pub mod optimality;
pub mod problem;
pub mod sensitivity;
pub mod verify;

#[cfg(doctest)]
mod book;
