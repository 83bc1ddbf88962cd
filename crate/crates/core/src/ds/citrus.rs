//! Citrus: an internal BST map whose readers run inside RCU read-side
//! sections. Deleting a node with two children links a copy of its
//! successor in its place, waits a grace period, then unlinks the
//! original successor. The copy carries a ghost key from the link until
//! that unlink.

use super::{fin, flag, kv, link, lk};
use crate::runtime::{Abort, Ctx, Latch, Mutation, World};
use crate::trace::{Base, ExtendKind, Field, KeyVal, Loc, ObjId, ReachKind, Ret, Value};

#[derive(Clone, Copy, Debug)]
pub struct Citrus {
    root: ObjId,
}

struct Located {
    x: ObjId,
    tag: Value,
    y: Option<ObjId>,
}

fn fresh(k: KeyVal, d: i64) -> Vec<(Field, Value)> {
    vec![
        (Field::Key, Value::Key(k)),
        (Field::Data, Value::Int(d)),
        (Field::Left, Value::Null),
        (Field::Right, Value::Null),
        (Field::Tag, Value::Int(0)),
        (Field::Rem, Value::Bool(false)),
    ]
}

impl Citrus {
    pub fn init(w: &mut World) -> Self {
        let inf = w.create(&fresh(KeyVal::PosInf, 0));
        let root = w.create(&fresh(KeyVal::NegInf, 0));
        w.state.set(Loc::new(root, Field::Right), link(inf));
        w.set_root("root", root);
        Citrus { root }
    }

    async fn locate(self, ctx: &Ctx, k: i64) -> Located {
        let t0 = ctx.rcu_enter().await;
        let mut walk = ctx.walk("citrus:locate", Some(k), ReachKind::WeakK, ExtendKind::Bst, Base::At(t0));
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
        let (tag, t) = ctx.read(x, Field::Tag).await;
        ctx.log_field_read("citrus:locate-tag", k, ReachKind::WeakK, x, Field::Tag, t0, t, tag);
        ctx.rcu_exit().await;
        ctx.log_walk(walk);
        Located { x, tag, y: found }
    }

    pub async fn contains(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        let Located { y, .. } = self.locate(ctx, k).await;
        Ok(Ret::Data(match y {
            Some(y) => ctx.val(y, Field::Data).await.as_int(),
            None => None,
        }))
    }

    pub async fn insert(self, ctx: &Ctx, k: i64, d: i64) -> Result<Ret, Abort> {
        loop {
            let Located { x, tag, y } = self.locate(ctx, k).await;
            if y.is_some() {
                return Ok(Ret::Bool(false));
            }
            ctx.lock(x, Latch::Node).await;
            if flag(ctx.val(x, Field::Rem).await) {
                ctx.unlock_all().await;
                ctx.restart()?;
                continue;
            }
            let xk = kv(ctx.val(x, Field::Key).await);
            let side = if fin(k) < xk
                && lk(ctx.val(x, Field::Left).await).is_none()
                && ctx.val(x, Field::Tag).await == tag
            {
                Some((Field::Left, "insert:link-left"))
            } else if fin(k) > xk && lk(ctx.val(x, Field::Right).await).is_none() {
                Some((Field::Right, "insert:link-right"))
            } else {
                None
            };
            let Some((side, label)) = side else {
                ctx.unlock_all().await;
                ctx.restart()?;
                continue;
            };
            let n = ctx.alloc(fresh(fin(k), d), "insert:alloc").await;
            ctx.write(x, side, link(n), label).await;
            ctx.unlock_all().await;
            return Ok(Ret::Bool(true));
        }
    }

    /// Replaces the child of `x` on `k`'s side by `t`, bumping the tag when
    /// a left link becomes null.
    async fn set_child(self, ctx: &Ctx, x: ObjId, k: i64, t: Value, label: &'static str, ghost: Vec<(Loc, Value)>) {
        if fin(k) < kv(ctx.val(x, Field::Key).await) {
            ctx.write_ghost(x, Field::Left, t, label, ghost).await;
            if t == Value::Null {
                self.bump_tag(ctx, x).await;
            }
        } else {
            ctx.write_ghost(x, Field::Right, t, label, ghost).await;
        }
    }

    async fn bump_tag(self, ctx: &Ctx, o: ObjId) {
        let tag = ctx.val(o, Field::Tag).await.as_int().unwrap_or(0);
        ctx.write(o, Field::Tag, Value::Int(tag + 1), "delete:tag").await;
    }

    pub async fn delete(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        loop {
            let Located { x, y, .. } = self.locate(ctx, k).await;
            let Some(y) = y else { return Ok(Ret::Bool(false)) };
            ctx.lock(x, Latch::Node).await;
            ctx.lock(y, Latch::Node).await;
            let ok = !flag(ctx.val(y, Field::Rem).await)
                && !flag(ctx.val(x, Field::Rem).await)
                && (lk(ctx.val(x, Field::Left).await) == Some(y) || lk(ctx.val(x, Field::Right).await) == Some(y));
            if !ok {
                ctx.unlock_all().await;
                ctx.restart()?;
                continue;
            }
            let yl = ctx.val(y, Field::Left).await;
            let yr = ctx.val(y, Field::Right).await;
            if yl == Value::Null || yr == Value::Null {
                let other = if yl == Value::Null { yr } else { yl };
                ctx.write(y, Field::Rem, Value::Bool(true), "delete:mark").await;
                self.set_child(ctx, x, k, other, "delete:bypass", vec![]).await;
                ctx.unlock_all().await;
                return Ok(Ret::Bool(true));
            }
            if self.delete_two(ctx, k, x, y).await {
                return Ok(Ret::Bool(true));
            }
            ctx.unlock_all().await;
            ctx.restart()?;
        }
    }

    /// Two-children case with `x` and `y` latched. False means restart.
    async fn delete_two(self, ctx: &Ctx, k: i64, x: ObjId, y: ObjId) -> bool {
        let mut walk = ctx.walk("citrus:succ-walk", Some(k), ReachKind::SuccKEps, ExtendKind::BstEps, Base::At(0));
        let mut ps = y;
        let (cs_v, t0) = ctx.read(y, Field::Right).await;
        walk.push(Loc::new(y, Field::Right), t0);
        walk.rec.base = Base::At(t0);
        let mut cs = lk(cs_v).expect("two-children node has a right child");
        walk.virt(Loc::new(cs, Field::Key));
        let mut nx = lk(ctx.step(&mut walk, cs, Field::Left).await);
        while let Some(n) = nx {
            ps = cs;
            cs = n;
            walk.virt(Loc::new(cs, Field::Key));
            nx = lk(ctx.step(&mut walk, cs, Field::Left).await);
        }
        ctx.log_walk(walk);

        ctx.lock(ps, Latch::Node).await;
        ctx.lock(cs, Latch::Node).await;
        let ok = !flag(ctx.val(ps, Field::Rem).await)
            && !flag(ctx.val(cs, Field::Rem).await)
            && (ps == y || lk(ctx.val(ps, Field::Left).await) == Some(cs))
            && lk(ctx.val(cs, Field::Left).await).is_none();
        if !ok {
            return false;
        }
        let ck = ctx.val(cs, Field::Key).await;
        let cd = ctx.val(cs, Field::Data).await;
        let yl = ctx.val(y, Field::Left).await;
        let yr = ctx.val(y, Field::Right).await;
        let w = ctx
            .alloc(
                vec![
                    (Field::Key, ck),
                    (Field::Data, cd),
                    (Field::Left, yl),
                    (Field::Right, yr),
                    (Field::Tag, Value::Int(0)),
                    (Field::Rem, Value::Bool(false)),
                ],
                "delete:copy-successor",
            )
            .await;
        ctx.write(y, Field::Rem, Value::Bool(true), "delete:mark").await;
        ctx.lock(w, Latch::Node).await;
        let open = vec![(Loc::new(w, Field::GhostKey), Value::Key(fin(k)))];
        self.set_child(ctx, x, k, link(w), "delete:link-copy", open).await;
        if !ctx.has(Mutation::NoGracePeriod) {
            ctx.synchronize_rcu().await;
        }
        ctx.write(cs, Field::Rem, Value::Bool(true), "delete:mark-successor").await;
        let csr = ctx.val(cs, Field::Right).await;
        let collapse = vec![(Loc::new(w, Field::GhostKey), ck)];
        if ps == y {
            ctx.write_ghost(w, Field::Right, csr, "delete:unlink-successor", collapse).await;
        } else {
            ctx.write_ghost(ps, Field::Left, csr, "delete:unlink-successor", collapse).await;
            if csr == Value::Null {
                self.bump_tag(ctx, ps).await;
            }
        }
        ctx.unlock_all().await;
        true
    }
}
