//! Lazy list: sorted singly linked list, per-node latches, `rem` marking
//! before unlinking, latch-free `contains`.

use super::{fin, flag, kv, link, lk};
use crate::runtime::{Abort, Ctx, Latch, World};
use crate::trace::{ExtendKind, Field, KeyVal, Loc, ObjId, ReachKind, Ret, Value};

#[derive(Clone, Copy, Debug)]
pub struct LazyList {
    head: ObjId,
}

impl LazyList {
    pub fn init(w: &mut World) -> Self {
        let tail = w.create(&[
            (Field::Key, Value::Key(KeyVal::PosInf)),
            (Field::Succ, Value::Null),
            (Field::Rem, Value::Bool(false)),
        ]);
        let head = w.create(&[
            (Field::Key, Value::Key(KeyVal::NegInf)),
            (Field::Succ, link(tail)),
            (Field::Rem, Value::Bool(false)),
        ]);
        w.set_root("min", head);
        w.set_root("max", tail);
        LazyList { head }
    }

    pub async fn contains(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        let mut walk = ctx.walk_inv("lazy:contains", Some(k), ReachKind::SuccK, ExtendKind::Succ, false);
        let mut x = self.head;
        let mut xk = kv(ctx.step(&mut walk, x, Field::Key).await);
        while xk < fin(k) {
            x = lk(ctx.step(&mut walk, x, Field::Succ).await).expect("list ends at +inf");
            xk = kv(ctx.step(&mut walk, x, Field::Key).await);
        }
        let found = if xk == fin(k) {
            let (rem, t) = ctx.read(x, Field::Rem).await;
            ctx.log_field_read("lazy:contains-rem", k, ReachKind::SuccK, x, Field::Rem, ctx.inv_t(), t, rem);
            !flag(rem)
        } else {
            false
        };
        ctx.log_walk(walk);
        Ok(Ret::Bool(found))
    }

    /// Finds `pred.key < k <= curr.key`, logging the search.
    async fn locate(self, ctx: &Ctx, k: i64) -> (ObjId, ObjId, KeyVal) {
        let mut walk = ctx.walk_inv("lazy:locate", Some(k), ReachKind::SuccK, ExtendKind::Succ, false);
        let mut pred = self.head;
        walk.virt(Loc::new(pred, Field::Key));
        let mut curr = lk(ctx.step(&mut walk, pred, Field::Succ).await).expect("head has a successor");
        let mut ck = kv(ctx.step(&mut walk, curr, Field::Key).await);
        while ck < fin(k) {
            pred = curr;
            curr = lk(ctx.step(&mut walk, pred, Field::Succ).await).expect("list ends at +inf");
            ck = kv(ctx.step(&mut walk, curr, Field::Key).await);
        }
        ctx.log_walk(walk);
        (pred, curr, ck)
    }

    /// Latches `pred` and `curr` and checks they are unmarked and adjacent.
    async fn lock_and_validate(self, ctx: &Ctx, pred: ObjId, curr: ObjId) -> bool {
        ctx.lock(pred, Latch::Node).await;
        ctx.lock(curr, Latch::Node).await;
        let ok = !flag(ctx.val(pred, Field::Rem).await)
            && !flag(ctx.val(curr, Field::Rem).await)
            && lk(ctx.val(pred, Field::Succ).await) == Some(curr);
        if !ok {
            ctx.unlock_all().await;
        }
        ok
    }

    pub async fn insert(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        loop {
            let (pred, curr, ck) = self.locate(ctx, k).await;
            if !self.lock_and_validate(ctx, pred, curr).await {
                ctx.restart()?;
                continue;
            }
            let ok = ck != fin(k);
            if ok {
                let n = ctx
                    .alloc(
                        vec![
                            (Field::Key, Value::Key(fin(k))),
                            (Field::Succ, link(curr)),
                            (Field::Rem, Value::Bool(false)),
                        ],
                        "insert:alloc",
                    )
                    .await;
                ctx.write(pred, Field::Succ, link(n), "insert:publish").await;
            }
            ctx.unlock_all().await;
            return Ok(Ret::Bool(ok));
        }
    }

    pub async fn delete(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        loop {
            let (pred, curr, ck) = self.locate(ctx, k).await;
            if !self.lock_and_validate(ctx, pred, curr).await {
                ctx.restart()?;
                continue;
            }
            let ok = ck == fin(k);
            if ok {
                ctx.write(curr, Field::Rem, Value::Bool(true), "delete:mark").await;
                let next = ctx.val(curr, Field::Succ).await;
                ctx.write(pred, Field::Succ, next, "delete:succ-unlink").await;
            }
            ctx.unlock_all().await;
            return Ok(Ret::Bool(ok));
        }
    }
}
