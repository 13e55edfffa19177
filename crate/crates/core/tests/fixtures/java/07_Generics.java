package org.example.collect;

import java.util.Collection;
import java.util.function.Function;

public class Generics<K extends Comparable<K>, V> {
    private final java.util.TreeMap<K, V> map = new java.util.TreeMap<>();

    public Generics() {
    }

    public <R> java.util.List<R> mapValues(Function<? super V, ? extends R> f) {
        java.util.List<R> out = new java.util.ArrayList<>();
        for (V v : map.values()) {
            out.add(f.apply(v));
        }
        return out;
    }

    public void putAll(Collection<? extends K> keys, V value) {
        for (K k : keys) {
            map.put(k, value);
        }
    }
}
