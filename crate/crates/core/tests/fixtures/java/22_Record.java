package org.example.rec;

public class Record {
    public record Point(int x, int y) {
        public Point {
            if (x < 0) throw new IllegalArgumentException();
        }
    }

    private Point origin = new Point(0, 0);

    public double distance(Point p) {
        int dx = p.x() - origin.x();
        int dy = p.y() - origin.y();
        return Math.sqrt(dx * dx + dy * dy);
    }
}
