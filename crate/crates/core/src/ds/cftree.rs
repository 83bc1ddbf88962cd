//! Contention-friendly tree with backtracking: logical deletion through
//! `del`, physical removal of right children that points the removed
//! node's links back at its parent, and rotation by copying the rotated
//! node.

use super::{fin, flag, kv, link, lk};
use crate::runtime::{Abort, Ctx, Latch, World};
use crate::trace::{ExtendKind, Field, KeyVal, ObjId, ReachKind, Ret, Value};

#[derive(Clone, Copy, Debug)]
pub struct CfTree {
    root: ObjId,
}

fn fresh(k: KeyVal) -> Vec<(Field, Value)> {
    vec![
        (Field::Key, Value::Key(k)),
        (Field::Left, Value::Null),
        (Field::Right, Value::Null),
        (Field::Del, Value::Bool(false)),
        (Field::Rem, Value::Bool(false)),
    ]
}

impl CfTree {
    pub fn init(w: &mut World) -> Self {
        let root = w.create(&fresh(KeyVal::PosInf));
        w.set_root("root", root);
        CfTree { root }
    }

    /// `(x, y)`: `y` holds `k` or is none, `x` is the last node before it.
    async fn locate(self, ctx: &Ctx, site: &'static str, k: i64) -> (ObjId, Option<ObjId>) {
        let mut walk = ctx.walk_inv(site, Some(k), ReachKind::BstK, ExtendKind::Bst, false);
        let mut x = self.root;
        let mut y = self.root;
        let found = loop {
            let yk = kv(ctx.step(&mut walk, y, Field::Key).await);
            if yk == fin(k) {
                break Some(y);
            }
            x = y;
            let f = if yk < fin(k) { Field::Right } else { Field::Left };
            match lk(ctx.step(&mut walk, x, f).await) {
                Some(n) => y = n,
                None => break None,
            }
        };
        ctx.log_walk(walk);
        (x, found)
    }

    pub async fn contains(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        let (_, y) = self.locate(ctx, "cf:locate", k).await;
        let Some(y) = y else { return Ok(Ret::Bool(false)) };
        let (del, t) = ctx.read(y, Field::Del).await;
        ctx.log_field_read("cf:contains-del", k, ReachKind::BstK, y, Field::Del, ctx.inv_t(), t, del);
        Ok(Ret::Bool(!flag(del)))
    }

    pub async fn insert(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        loop {
            let (x, y) = self.locate(ctx, "cf:locate", k).await;
            if let Some(y) = y {
                ctx.lock(y, Latch::Node).await;
                if flag(ctx.val(y, Field::Rem).await) {
                    ctx.unlock_all().await;
                    ctx.restart()?;
                    continue;
                }
                let ret = flag(ctx.val(y, Field::Del).await);
                ctx.write(y, Field::Del, Value::Bool(false), "insert:unmark").await;
                ctx.unlock_all().await;
                return Ok(Ret::Bool(ret));
            }
            ctx.lock(x, Latch::Node).await;
            if flag(ctx.val(x, Field::Rem).await) {
                ctx.unlock_all().await;
                ctx.restart()?;
                continue;
            }
            let xk = kv(ctx.val(x, Field::Key).await);
            let side = if fin(k) < xk && lk(ctx.val(x, Field::Left).await).is_none() {
                Some(Field::Left)
            } else if fin(k) > xk && lk(ctx.val(x, Field::Right).await).is_none() {
                Some(Field::Right)
            } else {
                None
            };
            let Some(side) = side else {
                ctx.unlock_all().await;
                ctx.restart()?;
                continue;
            };
            let n = ctx.alloc(fresh(fin(k)), "insert:alloc").await;
            ctx.write(x, side, link(n), "insert:link").await;
            ctx.unlock_all().await;
            return Ok(Ret::Bool(true));
        }
    }

    pub async fn delete(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        loop {
            let (_, y) = self.locate(ctx, "cf:locate", k).await;
            let Some(y) = y else { return Ok(Ret::Bool(false)) };
            ctx.lock(y, Latch::Node).await;
            if flag(ctx.val(y, Field::Rem).await) {
                ctx.unlock_all().await;
                ctx.restart()?;
                continue;
            }
            let ret = !flag(ctx.val(y, Field::Del).await);
            ctx.write(y, Field::Del, Value::Bool(true), "delete:mark").await;
            ctx.unlock_all().await;
            return Ok(Ret::Bool(ret));
        }
    }

    /// The node holding `key`, or the leaf where the search for it ends.
    async fn pivot(self, ctx: &Ctx, site: &'static str, key: i64) -> ObjId {
        let (x, y) = self.locate(ctx, site, key).await;
        y.unwrap_or(x)
    }

    /// Physically removes the logically deleted right child of the pivot
    /// if it has at most one child.
    pub async fn remove_right(self, ctx: &Ctx, key: i64) -> Result<Ret, Abort> {
        let z = self.pivot(ctx, "cf:remove-locate", key).await;
        ctx.lock(z, Latch::Node).await;
        self.remove_locked(ctx, z).await;
        ctx.unlock_all().await;
        Ok(Ret::Unit)
    }

    async fn remove_locked(self, ctx: &Ctx, z: ObjId) -> Option<()> {
        let y = lk(ctx.val(z, Field::Right).await)?;
        if flag(ctx.val(z, Field::Rem).await) {
            return None;
        }
        ctx.lock(y, Latch::Node).await;
        if !flag(ctx.val(y, Field::Del).await) {
            return None;
        }
        let yl = ctx.val(y, Field::Left).await;
        let yr = ctx.val(y, Field::Right).await;
        let child = if yl == Value::Null {
            yr
        } else if yr == Value::Null {
            yl
        } else {
            return None;
        };
        ctx.write(z, Field::Right, child, "remove:unlink").await;
        ctx.write(y, Field::Right, link(z), "remove:backtrack-r").await;
        ctx.write(y, Field::Left, link(z), "remove:backtrack-l").await;
        ctx.write(y, Field::Rem, Value::Bool(true), "remove:mark-rem").await;
        Some(())
    }

    /// Right rotation of the pivot's left child `y`, replacing `y` by a
    /// fresh copy below `x = y.left`.
    pub async fn rotate_right_left(self, ctx: &Ctx, key: i64) -> Result<Ret, Abort> {
        let p = self.pivot(ctx, "cf:rotate-locate", key).await;
        ctx.lock(p, Latch::Node).await;
        self.rotate_locked(ctx, p).await;
        ctx.unlock_all().await;
        Ok(Ret::Unit)
    }

    async fn rotate_locked(self, ctx: &Ctx, p: ObjId) -> Option<()> {
        let y = lk(ctx.val(p, Field::Left).await)?;
        if flag(ctx.val(p, Field::Rem).await) {
            return None;
        }
        ctx.lock(y, Latch::Node).await;
        let x = lk(ctx.val(y, Field::Left).await)?;
        ctx.lock(x, Latch::Node).await;
        let yk = ctx.val(y, Field::Key).await;
        let ydel = ctx.val(y, Field::Del).await;
        let yr = ctx.val(y, Field::Right).await;
        let z = ctx
            .alloc(
                vec![
                    (Field::Key, yk),
                    (Field::Left, link(x)),
                    (Field::Right, yr),
                    (Field::Del, ydel),
                    (Field::Rem, Value::Bool(false)),
                ],
                "rotate:duplicate",
            )
            .await;
        let xr = ctx.val(x, Field::Right).await;
        ctx.write(z, Field::Left, xr, "rotate:z-left").await;
        ctx.write(x, Field::Right, link(z), "rotate:x-right").await;
        ctx.write(p, Field::Left, link(x), "rotate:p-left").await;
        ctx.write(y, Field::Rem, Value::Bool(true), "rotate:mark-rem").await;
        Some(())
    }
}
